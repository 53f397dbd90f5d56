#include "kmod/container.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include "kmod/io_util.hpp"

namespace kmod {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

std::size_t align_up(std::size_t n) { return (n + kContainerAlign - 1) / kContainerAlign * kContainerAlign; }

template <typename T>
void append_pod(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T read_pod(std::string_view bytes, std::size_t offset) {
    T value;
    std::memcpy(&value, bytes.data() + offset, sizeof(T));
    return value;
}

}  // namespace

std::string encode_container(std::string_view magic, const nlohmann::json& meta, const std::vector<NamedTensor>& tensors) {
    if (magic.size() != 8) throw std::invalid_argument("container magic must be 8 bytes");
    nlohmann::json index = nlohmann::json::object();
    std::size_t offset = 0;
    for (const auto& nt : tensors) {
        if (index.contains(nt.name)) throw std::invalid_argument("duplicate tensor name '" + nt.name + "'");
        const std::size_t bytes = nt.tensor.numel() * sizeof(float);
        index[nt.name] = {{"shape", nt.tensor.shape()}, {"dtype", "f32"}, {"offset", offset}, {"bytes", bytes}};
        offset = align_up(offset + bytes);
    }
    const std::string header = nlohmann::json{{"tensors", index}, {"meta", meta}}.dump();

    std::string out(magic);
    append_pod<std::uint32_t>(out, kContainerVersion);
    append_pod<std::uint64_t>(out, header.size());
    out += header;
    out.resize(align_up(out.size()), '\0');
    const std::size_t base = out.size();
    out.resize(base + offset, '\0');
    for (const auto& nt : tensors) {
        const std::size_t at = base + index[nt.name]["offset"].get<std::size_t>();
        auto d = nt.tensor.data();
        for (std::size_t i = 0; i < d.size(); ++i) {
            const float f = static_cast<float>(d[i]);
            std::memcpy(out.data() + at + i * sizeof(float), &f, sizeof(float));
        }
    }
    return out;
}

ContainerContents decode_container(std::string_view bytes, std::string_view magic, const std::string& source_name) {
    auto fail = [&](const std::string& msg) { throw std::runtime_error(source_name + ": " + msg); };
    if (bytes.size() < 20) fail("file too short for container header");
    if (bytes.substr(0, 8) != magic) {
        fail("bad magic bytes (expected '" + std::string(magic) + "')");
    }
    const auto version = read_pod<std::uint32_t>(bytes, 8);
    if (version != kContainerVersion) fail("unsupported container version " + std::to_string(version));
    const auto header_len = read_pod<std::uint64_t>(bytes, 12);
    if (20 + header_len > bytes.size()) fail("truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(20, header_len));
    } catch (const nlohmann::json::parse_error& e) {
        fail(std::string("malformed header at byte ") + std::to_string(20 + e.byte) + ": " + e.what());
    }
    const std::size_t base = align_up(20 + header_len);
    ContainerContents out;
    out.meta = header.value("meta", nlohmann::json::object());
    for (const auto& [name, entry] : header.at("tensors").items()) {
        if (entry.at("dtype") != "f32") fail("tensor '" + name + "' has unsupported dtype");
        const auto shape = entry.at("shape").get<Shape>();
        const auto offset = entry.at("offset").get<std::size_t>();
        const auto n = numel(shape);
        if (entry.at("bytes").get<std::size_t>() != n * sizeof(float)) fail("tensor '" + name + "' byte count mismatch");
        if (base + offset + n * sizeof(float) > bytes.size()) fail("tensor '" + name + "' payload out of bounds");
        std::vector<double> data(n);
        for (std::size_t i = 0; i < n; ++i) {
            float f;
            std::memcpy(&f, bytes.data() + base + offset + i * sizeof(float), sizeof(float));
            data[i] = f;
        }
        out.tensors.emplace(name, Tensor(shape, std::move(data)));
    }
    return out;
}

void write_container(const std::filesystem::path& path, std::string_view magic, const nlohmann::json& meta,
                     const std::vector<NamedTensor>& tensors) {
    write_file_atomic(path, encode_container(magic, meta, tensors));
}

ContainerContents read_container(const std::filesystem::path& path, std::string_view magic) {
    return decode_container(read_file(path), magic, path.string());
}

}  // namespace kmod
