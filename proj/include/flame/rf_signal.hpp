#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "flame/random.hpp"

namespace flame::rf {

using Complex = std::complex<double>;

// Complex baseband observation window of length l >= 2 with finite samples.
class ComplexWaveform {
public:
    explicit ComplexWaveform(std::vector<Complex> samples);

    std::size_t length() const noexcept { return samples_.size(); }
    std::span<const Complex> samples() const noexcept { return samples_; }
    const Complex& operator[](std::size_t k) const { return samples_[k]; }

    // Mean |r[k]|^2.
    double power() const;

    friend bool operator==(const ComplexWaveform&, const ComplexWaveform&) = default;

private:
    std::vector<Complex> samples_;
};

// Concrete transmitter fingerprint. The impairment chain in apply_fingerprint
// is the identity when gain = 1 and every other field is 0.
struct TransmitterProfile {
    int transmitter_id = 0;
    double iq_gain_imbalance = 1.0;
    double iq_phase_imbalance = 0.0;  // radians
    double dc_offset_i = 0.0;
    double dc_offset_q = 0.0;
    double cfo_norm = 0.0;         // cycles per sample
    double phase_noise_std = 0.0;  // radians per sample step
    double pa_cubic_coeff = 0.0;

    friend bool operator==(const TransmitterProfile&, const TransmitterProfile&) = default;
};

// Parameter ranges for synthesized profiles (uniform draws).
struct ImpairmentRanges {
    static constexpr double gain_lo = 0.9, gain_hi = 1.1;
    static constexpr double phase_deg = 5.0;
    static constexpr double dc = 0.05;
    static constexpr double cfo = 0.01;
    static constexpr double phase_noise_hi = 0.01;
    static constexpr double cubic = 0.05;
};

TransmitterProfile synth_transmitter_profile(std::uint64_t master_seed, int transmitter_id);

// IQ imbalance -> DC offset -> cubic PA term -> CFO rotation -> phase-noise walk.
ComplexWaveform apply_fingerprint(const TransmitterProfile& profile, const ComplexWaveform& symbols,
                                  Rng& rng);

inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

// Complex AWGN at the requested SNR. snr_db = +inf returns the input unchanged.
ComplexWaveform add_awgn(const ComplexWaveform& waveform, double snr_db, Rng& rng);

// Unit-power QPSK, one symbol per sample.
ComplexWaveform qpsk_symbols(std::size_t length, Rng& rng);

struct LabeledExample {
    ComplexWaveform waveform;
    int label;
    double snr_db;
};

// In-memory image of the on-disk dataset. Samples are interleaved I/Q float32.
struct DatasetRecord {
    std::uint16_t label = 0;
    std::vector<float> iq;  // 2 * window_length values

    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct DatasetFile {
    std::uint32_t transmitter_count = 0;
    std::uint32_t window_length = 0;
    std::vector<DatasetRecord> records;

    // Checks header/record consistency; throws DatasetFormatError.
    void validate() const;

    ComplexWaveform waveform(std::size_t record) const;
    std::vector<int> labels() const;

    friend bool operator==(const DatasetFile&, const DatasetFile&) = default;
};

inline constexpr char kDatasetMagic[4] = {'F', 'L', 'R', 'F'};
inline constexpr std::uint32_t kDatasetVersion = 1;

enum class SymbolSource { Preamble, Random };

struct GenerationParams {
    int transmitter_count = 16;
    int per_tx_count = 200;
    int window_length = 64;
    double snr_db = 10.0;
    std::uint64_t master_seed = 7;
    // Preamble: every record carries the same QPSK window, drawn once from the
    // master seed. Random: each record draws its own symbols.
    SymbolSource symbols = SymbolSource::Preamble;
};

// Records are emitted transmitter-major: all of transmitter 0, then 1, ...
DatasetFile generate_dataset(const GenerationParams& params);

void write_dataset(const DatasetFile& dataset, const std::filesystem::path& path);
DatasetFile read_dataset(const std::filesystem::path& path);

}  // namespace flame::rf
