#include "flame/modality.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "flame/error.hpp"
#include "flame/fft.hpp"

namespace flame::modality {

std::string_view name(Modality m) {
    switch (m) {
        case Modality::IQ: return "iq";
        case Modality::DFT: return "dft";
        case Modality::AmpPhase: return "amp_phase";
    }
    return "?";
}

Modality parse_modality(std::string_view s) {
    if (s == "iq") return Modality::IQ;
    if (s == "dft") return Modality::DFT;
    if (s == "amp_phase") return Modality::AmpPhase;
    throw InvalidArgument("unknown modality '" + std::string(s) + "'");
}

ModalitySet::ModalitySet(std::vector<Modality> items) : items_(std::move(items)) {
    if (items_.empty()) {
        throw InvalidArgument("modality selection must be non-empty");
    }
    for (std::size_t i = 0; i < items_.size(); ++i) {
        for (std::size_t j = i + 1; j < items_.size(); ++j) {
            if (items_[i] == items_[j]) {
                throw InvalidArgument("duplicate modality '" + std::string(name(items_[i])) + "'");
            }
        }
    }
}

bool ModalitySet::contains(Modality m) const {
    return std::find(items_.begin(), items_.end(), m) != items_.end();
}

std::string ModalitySet::to_string() const {
    std::string s;
    for (auto m : items_) {
        if (!s.empty()) s += '+';
        s += name(m);
    }
    return s;
}

namespace {

RealMatrix from_complex(Modality source, std::span<const rf::Complex> z) {
    RealMatrix out{source, z.size(), std::vector<double>(2 * z.size())};
    for (std::size_t k = 0; k < z.size(); ++k) {
        out.at(k, 0) = z[k].real();
        out.at(k, 1) = z[k].imag();
    }
    return out;
}

// Neumaier-compensated sum of an already sorted range.
double compensated_sum(std::span<const double> v) {
    double sum = 0.0;
    double comp = 0.0;
    for (double x : v) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    return sum + comp;
}

}  // namespace

RealMatrix to_iq(const rf::ComplexWaveform& w) { return from_complex(Modality::IQ, w.samples()); }

RealMatrix to_dft(const rf::ComplexWaveform& w) {
    const auto spectrum = dft(w.samples());
    return from_complex(Modality::DFT, spectrum);
}

RealMatrix to_amp_phase(const rf::ComplexWaveform& w) {
    RealMatrix out{Modality::AmpPhase, w.length(), std::vector<double>(2 * w.length())};
    for (std::size_t k = 0; k < w.length(); ++k) {
        const double re = w[k].real();
        const double im = w[k].imag();
        out.at(k, 0) = std::sqrt(re * re + im * im);
        double phase = (re == 0.0 && im == 0.0) ? 0.0 : std::atan2(im, re);
        // atan2 returns -pi for (-x, -0.0); fold onto the (-pi, pi] branch.
        if (phase <= -std::numbers::pi) {
            phase = std::numbers::pi;
        }
        out.at(k, 1) = phase;
    }
    return out;
}

RealMatrix transform(Modality m, const rf::ComplexWaveform& w) {
    switch (m) {
        case Modality::IQ: return to_iq(w);
        case Modality::DFT: return to_dft(w);
        case Modality::AmpPhase: return to_amp_phase(w);
    }
    throw InvalidArgument("bad modality");
}

NormalizationStats fit_normalization(std::span<const rf::ComplexWaveform> examples, const ModalitySet& selection) {
    if (examples.empty()) {
        throw InvalidArgument("fit_normalization needs at least one example");
    }
    NormalizationStats stats;
    for (auto m : selection.items()) {
        std::array<std::vector<double>, 2> cols;
        for (const auto& w : examples) {
            const auto mat = transform(m, w);
            for (std::size_t k = 0; k < mat.rows; ++k) {
                cols[0].push_back(mat.at(k, 0));
                cols[1].push_back(mat.at(k, 1));
            }
        }
        for (std::size_t c = 0; c < 2; ++c) {
            auto& v = cols[c];
            std::sort(v.begin(), v.end());
            const double n = static_cast<double>(v.size());
            const double mean = compensated_sum(v) / n;
            std::vector<double> sq(v.size());
            std::transform(v.begin(), v.end(), sq.begin(), [mean](double x) { return (x - mean) * (x - mean); });
            std::sort(sq.begin(), sq.end());
            const double var = compensated_sum(sq) / n;
            stats.columns[static_cast<std::size_t>(m)][c] = ColumnStats{mean, std::sqrt(var)};
        }
    }
    return stats;
}

ModalInput stack_modalities(const rf::ComplexWaveform& w, const ModalitySet& selection,
                            std::shared_ptr<const NormalizationStats> stats) {
    if (!stats) {
        stats = std::make_shared<const NormalizationStats>();
    }
    ModalInput in;
    in.shape = InputShape{w.length(), 2, selection.size()};
    in.selection = selection.items();
    in.values.resize(in.shape.size());
    for (std::size_t m = 0; m < selection.size(); ++m) {
        const auto mat = transform(selection[m], w);
        for (std::size_t c = 0; c < 2; ++c) {
            const auto& cs = stats->of(selection[m], c);
            const double scale = std::max(cs.std, kStdFloor);
            for (std::size_t k = 0; k < mat.rows; ++k) {
                in.values[(m * w.length() + k) * 2 + c] = (mat.at(k, c) - cs.mean) / scale;
            }
        }
    }
    in.stats = std::move(stats);
    return in;
}

}  // namespace flame::modality
