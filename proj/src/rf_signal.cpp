#include <optional>
#include "flame/rf_signal.hpp"

#include <cmath>
#include <numbers>

#include "flame/error.hpp"

namespace flame::rf {

namespace {

// Stream tags keep profile draws and record draws in separate seed spaces.
constexpr std::uint64_t kProfileStream = 0x70726f66ULL;
constexpr std::uint64_t kRecordStream = 0x7265636fULL;
constexpr std::uint64_t kPreambleStream = 0x7072656dULL;

}  // namespace

ComplexWaveform::ComplexWaveform(std::vector<Complex> samples) : samples_(std::move(samples)) {
    if (samples_.size() < 2) {
        throw InvalidArgument("waveform length must be >= 2");
    }
    for (const auto& s : samples_) {
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) {
            throw InvalidArgument("waveform contains non-finite samples");
        }
    }
}

double ComplexWaveform::power() const {
    double acc = 0.0;
    for (const auto& s : samples_) {
        acc += std::norm(s);
    }
    return acc / static_cast<double>(samples_.size());
}

TransmitterProfile synth_transmitter_profile(std::uint64_t master_seed, int transmitter_id) {
    if (transmitter_id < 0) {
        throw InvalidArgument("transmitter_id must be >= 0");
    }
    using R = ImpairmentRanges;
    Rng rng(derive_seed({master_seed, kProfileStream, static_cast<std::uint64_t>(transmitter_id)}));
    const double deg = std::numbers::pi / 180.0;
    TransmitterProfile p;
    p.transmitter_id = transmitter_id;
    p.iq_gain_imbalance = rng.uniform(R::gain_lo, R::gain_hi);
    p.iq_phase_imbalance = rng.uniform(-R::phase_deg * deg, R::phase_deg * deg);
    p.dc_offset_i = rng.uniform(-R::dc, R::dc);
    p.dc_offset_q = rng.uniform(-R::dc, R::dc);
    p.cfo_norm = rng.uniform(-R::cfo, R::cfo);
    p.phase_noise_std = rng.uniform(0.0, R::phase_noise_hi);
    p.pa_cubic_coeff = rng.uniform(-R::cubic, R::cubic);
    return p;
}

ComplexWaveform apply_fingerprint(const TransmitterProfile& profile, const ComplexWaveform& symbols,
                                  Rng& rng) {
    const double two_pi = 2.0 * std::numbers::pi;
    const double cos_phi = std::cos(profile.iq_phase_imbalance);
    const double sin_phi = std::sin(profile.iq_phase_imbalance);

    std::vector<Complex> out(symbols.length());
    double walk = 0.0;
    for (std::size_t k = 0; k < symbols.length(); ++k) {
        const double i0 = symbols[k].real();
        const double q0 = symbols[k].imag();

        // Quadrature branch picks up gain and phase mismatch.
        double i1 = i0;
        double q1 = profile.iq_gain_imbalance * (sin_phi * i0 + cos_phi * q0);

        i1 += profile.dc_offset_i;
        q1 += profile.dc_offset_q;

        const double mag2 = i1 * i1 + q1 * q1;
        const double i2 = i1 + profile.pa_cubic_coeff * i1 * mag2;
        const double q2 = q1 + profile.pa_cubic_coeff * q1 * mag2;

        // Phase noise accumulates; a normal draw is consumed even when std = 0
        // so the stream position does not depend on the profile.
        walk += profile.phase_noise_std * rng.normal();
        const double theta = two_pi * profile.cfo_norm * static_cast<double>(k) + walk;
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        out[k] = Complex(i2 * c - q2 * s, i2 * s + q2 * c);
    }
    return ComplexWaveform(std::move(out));
}

ComplexWaveform add_awgn(const ComplexWaveform& waveform, double snr_db, Rng& rng) {
    if (std::isinf(snr_db) && snr_db > 0) {
        return waveform;
    }
    if (std::isnan(snr_db)) {
        throw InvalidArgument("snr_db is NaN");
    }
    const double signal_power = waveform.power();
    if (signal_power == 0.0) {
        throw InvalidArgument("undefined SNR scaling: zero-power signal with finite snr_db");
    }
    const double noise_power = signal_power / std::pow(10.0, snr_db / 10.0);
    const double component_std = std::sqrt(noise_power / 2.0);
    std::vector<Complex> out(waveform.samples().begin(), waveform.samples().end());
    for (auto& s : out) {
        const double ni = component_std * rng.normal();
        const double nq = component_std * rng.normal();
        s += Complex(ni, nq);
    }
    return ComplexWaveform(std::move(out));
}

ComplexWaveform qpsk_symbols(std::size_t length, Rng& rng) {
    const double a = 1.0 / std::numbers::sqrt2;
    std::vector<Complex> out(length);
    for (auto& s : out) {
        const auto bits = rng.below(4);
        s = Complex((bits & 1U) ? a : -a, (bits & 2U) ? a : -a);
    }
    return ComplexWaveform(std::move(out));
}

void DatasetFile::validate() const {
    for (const auto& r : records) {
        if (r.label >= transmitter_count) {
            throw DatasetFormatError("record label " + std::to_string(r.label) +
                                     " >= transmitter count " + std::to_string(transmitter_count));
        }
        if (r.iq.size() != 2 * static_cast<std::size_t>(window_length)) {
            throw DatasetFormatError("record does not hold window_length complex samples");
        }
    }
}

ComplexWaveform DatasetFile::waveform(std::size_t record) const {
    const auto& iq = records.at(record).iq;
    std::vector<Complex> s(window_length);
    for (std::size_t k = 0; k < s.size(); ++k) {
        s[k] = Complex(iq[2 * k], iq[2 * k + 1]);
    }
    return ComplexWaveform(std::move(s));
}

std::vector<int> DatasetFile::labels() const {
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(r.label);
    }
    return out;
}

DatasetFile generate_dataset(const GenerationParams& params) {
    if (params.transmitter_count < 2) {
        throw InvalidArgument("transmitter count must be >= 2");
    }
    if (params.transmitter_count > 65536) {
        throw InvalidArgument("transmitter count must fit a u16 label");
    }
    if (params.per_tx_count < 1) {
        throw InvalidArgument("per_tx_count must be >= 1");
    }
    if (params.window_length < 2) {
        throw InvalidArgument("window length must be >= 2");
    }
    DatasetFile d;
    d.transmitter_count = static_cast<std::uint32_t>(params.transmitter_count);
    d.window_length = static_cast<std::uint32_t>(params.window_length);
    d.records.reserve(static_cast<std::size_t>(params.transmitter_count) * params.per_tx_count);

    std::optional<ComplexWaveform> preamble;
    if (params.symbols == SymbolSource::Preamble) {
        Rng prng(derive_seed({params.master_seed, kPreambleStream}));
        preamble = qpsk_symbols(static_cast<std::size_t>(params.window_length), prng);
    }
    for (int tx = 0; tx < params.transmitter_count; ++tx) {
        const auto profile = synth_transmitter_profile(params.master_seed, tx);
        for (int i = 0; i < params.per_tx_count; ++i) {
            Rng rng(derive_seed({params.master_seed, kRecordStream, static_cast<std::uint64_t>(tx),
                                 static_cast<std::uint64_t>(i)}));
            const auto symbols = preamble ? *preamble
                                          : qpsk_symbols(static_cast<std::size_t>(params.window_length), rng);
            const auto rx = add_awgn(apply_fingerprint(profile, symbols, rng), params.snr_db, rng);
            DatasetRecord rec;
            rec.label = static_cast<std::uint16_t>(tx);
            rec.iq.resize(2 * rx.length());
            for (std::size_t k = 0; k < rx.length(); ++k) {
                rec.iq[2 * k] = static_cast<float>(rx[k].real());
                rec.iq[2 * k + 1] = static_cast<float>(rx[k].imag());
            }
            d.records.push_back(std::move(rec));
        }
    }
    return d;
}

}  // namespace flame::rf
