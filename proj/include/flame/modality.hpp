#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flame/rf_signal.hpp"

namespace flame::modality {

// Fixed numbering: channel order follows this enum when all are selected.
enum class Modality { IQ = 0, DFT = 1, AmpPhase = 2 };
inline constexpr std::size_t kModalityCount = 3;

std::string_view name(Modality m);                 // "iq", "dft", "amp_phase"
Modality parse_modality(std::string_view name);   // throws InvalidArgument

// Ordered, non-empty, duplicate-free subset of the three modalities.
class ModalitySet {
public:
    explicit ModalitySet(std::vector<Modality> items);
    static ModalitySet all() { return ModalitySet({Modality::IQ, Modality::DFT, Modality::AmpPhase}); }

    std::size_t size() const noexcept { return items_.size(); }
    Modality operator[](std::size_t i) const { return items_[i]; }
    const std::vector<Modality>& items() const noexcept { return items_; }
    bool contains(Modality m) const;
    std::string to_string() const;  // e.g. "iq+dft"

    friend bool operator==(const ModalitySet&, const ModalitySet&) = default;

private:
    std::vector<Modality> items_;
};

// l x 2 real matrix, row-major. Column meaning depends on `source`.
struct RealMatrix {
    Modality source = Modality::IQ;
    std::size_t rows = 0;
    std::vector<double> values;

    double at(std::size_t k, std::size_t c) const { return values[2 * k + c]; }
    double& at(std::size_t k, std::size_t c) { return values[2 * k + c]; }
};

RealMatrix to_iq(const rf::ComplexWaveform& w);
RealMatrix to_dft(const rf::ComplexWaveform& w);
// Column 0 amplitude, column 1 four-quadrant phase in (-pi, pi]; phase(0) = 0.
RealMatrix to_amp_phase(const rf::ComplexWaveform& w);
RealMatrix transform(Modality m, const rf::ComplexWaveform& w);

inline constexpr double kStdFloor = 1e-8;

struct ColumnStats {
    double mean = 0.0;
    double std = 1.0;
};

// Per-(modality, column) standardization statistics. Unfitted entries are identity.
struct NormalizationStats {
    std::array<std::array<ColumnStats, 2>, kModalityCount> columns{};

    static NormalizationStats identity() { return {}; }
    const ColumnStats& of(Modality m, std::size_t c) const { return columns[static_cast<std::size_t>(m)][c]; }

    friend bool operator==(const NormalizationStats& a, const NormalizationStats& b) {
        for (std::size_t m = 0; m < kModalityCount; ++m) {
            for (std::size_t c = 0; c < 2; ++c) {
                if (a.columns[m][c].mean != b.columns[m][c].mean || a.columns[m][c].std != b.columns[m][c].std) {
                    return false;
                }
            }
        }
        return true;
    }
};

// Population mean/std over every sample of every example. Sums run over the
// sorted values, so the result is bit-identical for any ordering of `examples`.
NormalizationStats fit_normalization(std::span<const rf::ComplexWaveform> examples, const ModalitySet& selection);

struct InputShape {
    std::size_t length = 0;
    std::size_t width = 2;
    std::size_t channels = 1;

    std::size_t size() const noexcept { return length * width * channels; }
    friend bool operator==(const InputShape&, const InputShape&) = default;
};

// Stacked l x 2 x M classifier input. Storage is channel-major:
// values[(m * length + k) * 2 + c].
struct ModalInput {
    InputShape shape;
    std::vector<Modality> selection;
    std::shared_ptr<const NormalizationStats> stats;
    std::vector<double> values;

    double at(std::size_t m, std::size_t k, std::size_t c) const {
        return values[(m * shape.length + k) * shape.width + c];
    }
};

ModalInput stack_modalities(const rf::ComplexWaveform& w, const ModalitySet& selection,
                            std::shared_ptr<const NormalizationStats> stats);

}  // namespace flame::modality
