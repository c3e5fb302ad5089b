#include <fstream>
#include <iterator>
#include <json.hpp>

#include "bytes.hpp"
#include "flame/error.hpp"
#include "flame/experiment.hpp"

namespace flame::experiment {

namespace {

constexpr char kModelMagic[4] = {'F', 'L', 'M', 'D'};
constexpr std::uint32_t kModelVersion = 1;

nlohmann::json header_json(const ModelFile& m) {
    const auto& s = m.spec;
    nlohmann::json mods = nlohmann::json::array();
    for (auto mod : m.modalities.items()) mods.push_back(std::string(modality::name(mod)));
    return {{"kind", std::string(learner::kind_name(s.kind))},
            {"length", s.input.length},
            {"width", s.input.width},
            {"channels", s.input.channels},
            {"classes", s.classes},
            {"block1_width", s.resnet.block1},
            {"block2_width", s.resnet.block2},
            {"trunk_width", s.resnet.trunk},
            {"hidden_width", s.resnet.hidden},
            {"kernel", s.resnet.kernel},
            {"l2_coeff", s.l2_coeff},
            {"modalities", mods},
            {"seed", m.seed}};
}

}  // namespace

void write_model(const ModelFile& model, const std::filesystem::path& path) {
    if (!model.params.same_layout(ParamVector(learner::make_layout(model.spec)))) {
        throw LayoutMismatch("model parameters do not match the model spec");
    }
    const auto header = header_json(model).dump();
    detail::ByteWriter w;
    w.raw(kModelMagic, 4);
    w.put<std::uint32_t>(kModelVersion);
    w.put<std::uint64_t>(header.size());
    w.raw(header.data(), header.size());
    w.put<std::uint64_t>(model.params.size());
    for (double v : model.params.values()) w.put<double>(v);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw Error("failed writing " + path.string());
}

ModelFile read_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("missing model file " + path.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    detail::ByteReader r(bytes);
    if (!r.has(4) || std::string(r.take(4), 4) != std::string(kModelMagic, 4)) {
        throw BadMagic();
    }
    if (!r.has(12)) throw Truncated("model header");
    const auto version = r.get<std::uint32_t>();
    if (version != kModelVersion) throw VersionMismatch(version);
    const auto header_len = r.get<std::uint64_t>();
    if (!r.has(header_len)) throw Truncated("model header");
    const std::string header(r.take(header_len), header_len);

    ModelFile m;
    try {
        const auto j = nlohmann::json::parse(header);
        m.spec.kind = learner::parse_kind(j.at("kind").get<std::string>());
        m.spec.input = {j.at("length").get<std::size_t>(), j.at("width").get<std::size_t>(),
                        j.at("channels").get<std::size_t>()};
        m.spec.classes = j.at("classes").get<std::size_t>();
        m.spec.resnet = {j.at("block1_width").get<std::size_t>(), j.at("block2_width").get<std::size_t>(),
                         j.at("trunk_width").get<std::size_t>(), j.at("hidden_width").get<std::size_t>(),
                         j.at("kernel").get<std::size_t>()};
        m.spec.l2_coeff = j.at("l2_coeff").get<double>();
        std::vector<modality::Modality> items;
        for (const auto& e : j.at("modalities")) items.push_back(modality::parse_modality(e.get<std::string>()));
        m.modalities = modality::ModalitySet(std::move(items));
        m.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw DatasetFormatError(std::string("bad model header: ") + e.what());
    }
    const auto layout = learner::make_layout(m.spec);
    if (!r.has(8)) throw Truncated("parameter count");
    const auto count = r.get<std::uint64_t>();
    if (count != layout->total()) throw LayoutMismatch("model file parameter count does not match its spec");
    if (r.remaining() != count * 8) {
        if (r.remaining() < count * 8) throw Truncated("parameters");
        throw DatasetFormatError("trailing bytes after parameters");
    }
    std::vector<double> values(count);
    for (auto& v : values) v = r.get<double>();
    m.params = ParamVector(layout, std::move(values));
    return m;
}

}  // namespace flame::experiment
