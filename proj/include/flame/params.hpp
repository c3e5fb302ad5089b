#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace flame {

struct Segment {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    bool is_bias = false;

    friend bool operator==(const Segment&, const Segment&) = default;
};

// Maps named segments of a flat parameter vector to model layers.
class ParamLayout {
public:
    ParamLayout() = default;

    // Appends a segment and returns its offset.
    std::size_t add(std::string name, std::size_t size, bool is_bias = false);

    std::size_t total() const noexcept { return total_; }
    const std::vector<Segment>& segments() const noexcept { return segments_; }
    const Segment& find(const std::string& name) const;

    friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

private:
    std::vector<Segment> segments_;
    std::size_t total_ = 0;
};

// Flat 64-bit vector tagged with its layout. ParamVector and GradVector are
// distinct types over the same storage; mixing layouts raises LayoutMismatch.
template <class Tag>
class FlatVector {
public:
    FlatVector() = default;
    explicit FlatVector(std::shared_ptr<const ParamLayout> layout)
        : layout_(std::move(layout)), values_(layout_ ? layout_->total() : 0, 0.0) {}
    FlatVector(std::shared_ptr<const ParamLayout> layout, std::vector<double> values);

    std::size_t size() const noexcept { return values_.size(); }
    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    const std::shared_ptr<const ParamLayout>& layout() const noexcept { return layout_; }
    std::span<double> segment(const std::string& name);
    std::span<const double> segment(const std::string& name) const;

    template <class Other>
    bool same_layout(const FlatVector<Other>& other) const {
        if (size() != other.size()) return false;
        if (layout_ == other.layout()) return true;
        return layout_ && other.layout() && *layout_ == *other.layout();
    }

    friend bool operator==(const FlatVector& a, const FlatVector& b) {
        return a.same_layout(b) && a.values_ == b.values_;
    }

private:
    std::shared_ptr<const ParamLayout> layout_;
    std::vector<double> values_;
};

struct ParamTag {};
struct GradTag {};
using ParamVector = FlatVector<ParamTag>;
using GradVector = FlatVector<GradTag>;

// Throws LayoutMismatch unless a and b share a layout.
template <class A, class B>
void require_same_layout(const FlatVector<A>& a, const FlatVector<B>& b, const char* what);

// Layout-free vector of the given size (for analysis problems).
std::shared_ptr<const ParamLayout> flat_layout(std::size_t size);

// params - eta * grad, elementwise.
ParamVector sgd_step(ParamVector params, const GradVector& grad, double eta);

double squared_norm(std::span<const double> v);
double norm(std::span<const double> v);

}  // namespace flame
