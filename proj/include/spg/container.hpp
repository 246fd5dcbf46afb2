#pragma once

// SPG1 container: "SPG1", u32 little-endian header length, UTF-8 JSON header,
// then a payload of little-endian f32 tensors laid out row-major.
//
// The header holds "schema_version", a "tensors" directory of
// {name, dtype, shape, byte_offset, byte_len} (offsets relative to the payload
// start) and any caller metadata keys alongside.

#include "spg/core/diff_tensor.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace spg {

inline constexpr int kContainerSchemaVersion = 1;

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct ContainerData {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<TensorRecord> tensors;

  /// nullptr if absent.
  const TensorRecord* find(const std::string& name) const;
  /// Throws FormatError if absent.
  const TensorRecord& at(const std::string& name) const;
  void add(std::string name, Shape shape, std::vector<float> data);
  void add(std::string name, const Shape& shape, const Eigen::Ref<const Eigen::VectorXd>& values);
};

std::vector<std::uint8_t> encode_container(const ContainerData& data);
/// Validates magic, schema, directory ranges and float finiteness; errors carry
/// the absolute byte offset of the problem.
ContainerData decode_container(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, const ContainerData& data);
ContainerData read_container(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a partial file.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace spg
