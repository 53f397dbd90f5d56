#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kmod/tensor.hpp"

namespace kmod {

// Binary layout shared by checkpoints and dataset payloads:
//
//   magic[8] | version u32 LE | header_len u64 LE | header (UTF-8 JSON)
//   | zero pad to 64 bytes | tensor payloads (float32 LE, each 64-byte aligned)
//
// The header holds {"tensors": {name: {shape, dtype, offset, bytes}}, "meta": ...};
// offsets are relative to the start of the payload section.
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kContainerAlign = 64;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

std::string encode_container(std::string_view magic, const nlohmann::json& meta, const std::vector<NamedTensor>& tensors);

struct ContainerContents {
    nlohmann::json meta;
    std::map<std::string, Tensor> tensors;
};

ContainerContents decode_container(std::string_view bytes, std::string_view magic, const std::string& source_name);

void write_container(const std::filesystem::path& path, std::string_view magic, const nlohmann::json& meta,
                     const std::vector<NamedTensor>& tensors);
ContainerContents read_container(const std::filesystem::path& path, std::string_view magic);

}  // namespace kmod
