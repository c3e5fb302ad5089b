#include "flame/params.hpp"

#include <cmath>

#include "flame/error.hpp"

namespace flame {

std::size_t ParamLayout::add(std::string name, std::size_t size, bool is_bias) {
    const std::size_t offset = total_;
    segments_.push_back(Segment{std::move(name), offset, size, is_bias});
    total_ += size;
    return offset;
}

const Segment& ParamLayout::find(const std::string& name) const {
    for (const auto& s : segments_) {
        if (s.name == name) {
            return s;
        }
    }
    throw InvalidArgument("no parameter segment named '" + name + "'");
}

template <class Tag>
FlatVector<Tag>::FlatVector(std::shared_ptr<const ParamLayout> layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
    if (!layout_ || layout_->total() != values_.size()) {
        throw LayoutMismatch("values do not match layout size");
    }
}

template <class Tag>
std::span<double> FlatVector<Tag>::segment(const std::string& name) {
    const auto& s = layout_->find(name);
    return std::span<double>(values_).subspan(s.offset, s.size);
}

template <class Tag>
std::span<const double> FlatVector<Tag>::segment(const std::string& name) const {
    const auto& s = layout_->find(name);
    return std::span<const double>(values_).subspan(s.offset, s.size);
}

template class FlatVector<ParamTag>;
template class FlatVector<GradTag>;

template <class A, class B>
void require_same_layout(const FlatVector<A>& a, const FlatVector<B>& b, const char* what) {
    if (!a.same_layout(b)) {
        throw LayoutMismatch(std::string(what) + ": layout mismatch (" + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + ")");
    }
}

template void require_same_layout(const ParamVector&, const ParamVector&, const char*);
template void require_same_layout(const ParamVector&, const GradVector&, const char*);
template void require_same_layout(const GradVector&, const GradVector&, const char*);

std::shared_ptr<const ParamLayout> flat_layout(std::size_t size) {
    auto layout = std::make_shared<ParamLayout>();
    layout->add("w", size);
    return layout;
}

ParamVector sgd_step(ParamVector params, const GradVector& grad, double eta) {
    require_same_layout(params, grad, "sgd_step");
    if (!(eta >= 0.0) || !std::isfinite(eta)) {
        throw InvalidArgument("learning rate must be finite and >= 0");
    }
    auto w = params.values();
    auto g = grad.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] -= eta * g[i];
    }
    return params;
}

double squared_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) {
        acc += x * x;
    }
    return acc;
}

double norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

}  // namespace flame
