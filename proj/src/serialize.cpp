#include "trd/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace trd {

static_assert(std::endian::native == std::endian::little, "archive format assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'T', 'R', 'D', 'T', 'E', 'N', 'S', '1'};
}

void TensorArchive::save(const std::string& path) const {
    nlohmann::json manifest = meta;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [name, t] : tensors) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = t.shape();
        list.push_back(entry);
    }
    manifest["tensors"] = list;
    const std::string mtxt = manifest.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    const std::uint64_t len = mtxt.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(mtxt.data(), static_cast<std::streamsize>(mtxt.size()));
    for (const auto& [name, t] : tensors)
        f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw CheckpointError("write failed: " + path);
}

TensorArchive TensorArchive::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("not a tensor archive (bad magic): " + path);
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!f || len == 0 || len > (1ULL << 30)) throw CheckpointError("corrupt manifest length: " + path);
    std::string mtxt(len, '\0');
    f.read(mtxt.data(), static_cast<std::streamsize>(len));
    if (!f) throw CheckpointError("truncated manifest: " + path);

    TensorArchive a;
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mtxt);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt manifest json: ") + e.what());
    }
    if (!manifest.contains("tensors") || !manifest["tensors"].is_array())
        throw CheckpointError("manifest missing tensor list: " + path);
    for (const auto& entry : manifest["tensors"]) {
        Shape shape = entry.at("shape").get<Shape>();
        Tensor t(shape);
        f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!f) throw CheckpointError("truncated tensor data: " + path);
        a.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
    manifest.erase("tensors");
    a.meta = manifest;
    return a;
}

}  // namespace trd
