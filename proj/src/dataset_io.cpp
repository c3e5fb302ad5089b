#include <cstring>
#include <fstream>
#include <iterator>

#include "flame/error.hpp"
#include "flame/rf_signal.hpp"
#include "bytes.hpp"

namespace flame::rf {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 8;

}  // namespace

void write_dataset(const DatasetFile& dataset, const std::filesystem::path& path) {
    dataset.validate();
    ByteWriter w;
    w.raw(kDatasetMagic, 4);
    w.put<std::uint32_t>(kDatasetVersion);
    w.put<std::uint32_t>(dataset.transmitter_count);
    w.put<std::uint32_t>(dataset.window_length);
    w.put<std::uint64_t>(dataset.records.size());
    for (const auto& r : dataset.records) {
        w.put<std::uint16_t>(r.label);
        for (float v : r.iq) {
            w.put<float>(v);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open dataset for writing: " + path.string());
    }
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) {
        throw Error("failed writing dataset: " + path.string());
    }
}

DatasetFile read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open dataset: " + path.string());
    }
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteReader r(bytes);

    if (!r.has(4) || std::memcmp(r.take(4), kDatasetMagic, 4) != 0) {
        throw BadMagic();
    }
    if (!r.has(kHeaderBytes - 4)) {
        throw Truncated("header");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kDatasetVersion) {
        throw VersionMismatch(version);
    }
    DatasetFile d;
    d.transmitter_count = r.get<std::uint32_t>();
    d.window_length = r.get<std::uint32_t>();
    const auto count = r.get<std::uint64_t>();
    const std::size_t record_bytes = 2 + 8 * static_cast<std::size_t>(d.window_length);
    if (r.remaining() / record_bytes < count) {
        throw Truncated("record section");
    }
    if (r.remaining() != count * record_bytes) {
        throw DatasetFormatError("trailing bytes after record section");
    }
    d.records.resize(count);
    for (auto& rec : d.records) {
        rec.label = r.get<std::uint16_t>();
        rec.iq.resize(2 * static_cast<std::size_t>(d.window_length));
        for (auto& v : rec.iq) {
            v = r.get<float>();
        }
    }
    d.validate();
    return d;
}

}  // namespace flame::rf
