#include "c3det/model/detector.hpp"

#include <cstring>

#include "c3det/core/dataset.hpp"
#include "c3det/model/head.hpp"

namespace c3det {

namespace {

constexpr char kMagic[8] = {'C', '3', 'D', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    return v;
}

struct Parsed {
    nlohmann::json header;
    std::size_t data_offset = 0;
};

Parsed parse(const std::string& bytes, const std::filesystem::path& path) {
    const std::string where = "checkpoint '" + path.string() + "'";
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw Error("checkpoint", where + " is not a checkpoint file");
    const auto version = get_u32(bytes, 8);
    if (version != kVersion)
        throw Error("checkpoint", where + " has unsupported version " + std::to_string(version));
    const auto len = get_u32(bytes, 12);
    if (bytes.size() < 16 + static_cast<std::size_t>(len)) throw Error("checkpoint", where + " is truncated");
    Parsed p;
    try {
        p.header = nlohmann::json::parse(bytes.substr(16, len));
    } catch (const nlohmann::json::exception& e) {
        throw Error("checkpoint", where + " has a corrupt header: " + e.what());
    }
    p.data_offset = 16 + len;
    return p;
}

}  // namespace

Detector::Detector(ModelConfig cfg, ClassCatalog catalog, std::uint64_t seed)
    : catalog_(std::move(catalog)), net_(cfg, catalog_.size(), seed) {}

std::vector<Detection> Detector::detect(const Image& image, std::span<const UserInput> inputs) {
    const auto& cfg = net_.config();
    const auto head = net_.forward(image, cfg.uses_inputs() ? inputs : std::span<const UserInput>{});
    return decode(head, cfg.score_threshold, cfg.nms_iou, cfg.top_n, image.width, image.height);
}

void Detector::save(const std::filesystem::path& path, const nlohmann::json& metadata) {
    nlohmann::json header;
    header["model"] = to_json(net_.config());
    header["classes"] = catalog_.names();
    header["metadata"] = metadata;
    nlohmann::json index = nlohmann::json::array();
    std::size_t offset = 0;
    for (auto* p : net_.params()) {
        index.push_back({{"name", p->name}, {"shape", p->shape}, {"offset", offset}, {"count", p->size()}});
        offset += p->size();
    }
    header["tensors"] = index;
    const std::string h = header.dump();
    std::string out(kMagic, 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(h.size()));
    out += h;
    for (auto* p : net_.params())
        out.append(reinterpret_cast<const char*>(p->value.data()), p->size() * sizeof(float));
    write_file_atomic(path, out);
    metadata_ = metadata;
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
    return parse(read_file(path), path).header;
}

Detector Detector::load(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    const auto p = parse(bytes, path);
    const std::string where = "checkpoint '" + path.string() + "'";
    ModelConfig cfg;
    ClassCatalog catalog;
    try {
        cfg = model_config_from_json(p.header.at("model"));
        catalog = ClassCatalog(p.header.at("classes").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
        throw Error("checkpoint", where + " header: " + e.what());
    }
    Detector d(cfg, catalog);
    const auto& index = p.header.at("tensors");
    auto params = d.net_.params();
    if (index.size() != params.size())
        throw Error("checkpoint", where + " holds " + std::to_string(index.size()) + " tensors, model expects " +
                                      std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = index[i];
        auto* q = params[i];
        if (e.at("name").get<std::string>() != q->name || e.at("shape").get<std::vector<int>>() != q->shape)
            throw Error("checkpoint", where + " tensor '" + e.at("name").get<std::string>() + "' does not match '" +
                                          q->name + "'");
        const auto off = p.data_offset + e.at("offset").get<std::size_t>() * sizeof(float);
        const auto n = q->size() * sizeof(float);
        if (off + n > bytes.size()) throw Error("checkpoint", where + " is truncated");
        std::memcpy(q->value.data(), bytes.data() + off, n);
    }
    d.metadata_ = p.header.value("metadata", nlohmann::json::object());
    return d;
}

Detector Detector::load(const std::filesystem::path& path, const ClassCatalog& expected) {
    Detector d = load(path);
    if (!(d.catalog() == expected))
        throw Error("checkpoint", "checkpoint '" + path.string() + "' was trained on " +
                                      std::to_string(d.catalog().size()) +
                                      " classes that differ from the dataset's " + std::to_string(expected.size()));
    return d;
}

}  // namespace c3det
