#include "spg/container.hpp"

#include "spg/core/errors.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace spg {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'G', '1'};
constexpr std::size_t kPrefix = 8;  // magic + header length

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  v = to_little(v);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return to_little(v);
}

}  // namespace

const TensorRecord* ContainerData::find(const std::string& name) const {
  const auto it = std::find_if(tensors.begin(), tensors.end(), [&](const TensorRecord& t) { return t.name == name; });
  return it == tensors.end() ? nullptr : &*it;
}

const TensorRecord& ContainerData::at(const std::string& name) const {
  if (const TensorRecord* t = find(name)) return *t;
  throw FormatError("container has no tensor '" + name + "'", 0);
}

void ContainerData::add(std::string name, Shape shape, std::vector<float> data) {
  if (shape_numel(shape) != data.size()) {
    throw ContractError("container tensor '" + name + "': shape " + shape_string(shape) + " does not match " +
                        std::to_string(data.size()) + " values");
  }
  tensors.push_back({std::move(name), std::move(shape), std::move(data)});
}

void ContainerData::add(std::string name, const Shape& shape, const Eigen::Ref<const Eigen::VectorXd>& values) {
  std::vector<float> data(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) data[static_cast<std::size_t>(i)] = static_cast<float>(values[i]);
  add(std::move(name), shape, std::move(data));
}

std::vector<std::uint8_t> encode_container(const ContainerData& data) {
  if (!data.metadata.is_object()) throw ContractError("container metadata must be a JSON object");
  nlohmann::json header = data.metadata;
  if (header.contains("schema_version") || header.contains("tensors")) {
    throw ContractError("container metadata may not use the reserved keys 'schema_version' or 'tensors'");
  }
  header["schema_version"] = kContainerSchemaVersion;
  nlohmann::json directory = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : data.tensors) {
    if (shape_numel(t.shape) != t.data.size()) throw ContractError("container tensor '" + t.name + "' has inconsistent shape");
    const std::size_t len = t.data.size() * sizeof(float);
    directory.push_back({{"name", t.name}, {"dtype", "f32"}, {"shape", t.shape}, {"byte_offset", offset}, {"byte_len", len}});
    offset += len;
  }
  header["tensors"] = directory;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kPrefix + text.size() + offset);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : data.tensors) {
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

ContainerData decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPrefix) throw FormatError("container truncated before header length", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected SPG1", 0);
  const std::size_t header_len = get_u32(bytes.data() + 4);
  if (kPrefix + header_len > bytes.size()) {
    throw FormatError("header of " + std::to_string(header_len) + " bytes runs past end of file", 4);
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPrefix, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("header is not valid JSON: ") + e.what(), kPrefix + e.byte);
  }
  if (!header.is_object()) throw FormatError("header is not a JSON object", kPrefix);
  if (!header.contains("schema_version") || header["schema_version"] != kContainerSchemaVersion) {
    throw FormatError("unsupported schema_version", kPrefix);
  }
  if (!header.contains("tensors") || !header["tensors"].is_array()) throw FormatError("header lacks a tensor directory", kPrefix);

  const std::size_t payload_start = kPrefix + header_len;
  const std::size_t payload_len = bytes.size() - payload_start;
  ContainerData out;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (const auto& entry : header["tensors"]) {
    TensorRecord t;
    std::size_t offset = 0, len = 0;
    try {
      t.name = entry.at("name").get<std::string>();
      if (entry.at("dtype") != "f32") throw FormatError("tensor '" + t.name + "' has unsupported dtype", kPrefix);
      t.shape = entry.at("shape").get<Shape>();
      offset = entry.at("byte_offset").get<std::size_t>();
      len = entry.at("byte_len").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed tensor directory entry: ") + e.what(), kPrefix);
    }
    if (len != shape_numel(t.shape) * sizeof(float)) {
      throw FormatError("tensor '" + t.name + "' byte_len disagrees with shape " + shape_string(t.shape), payload_start + offset);
    }
    if (offset > payload_len || len > payload_len - offset) {
      throw FormatError("tensor '" + t.name + "' extends past end of payload (truncated file?)", payload_start + offset);
    }
    if (out.find(t.name)) throw FormatError("duplicate tensor name '" + t.name + "'", kPrefix);
    ranges.emplace_back(offset, len);
    t.data.resize(len / sizeof(float));
    const std::uint8_t* p = bytes.data() + payload_start + offset;
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const float f = std::bit_cast<float>(get_u32(p + 4 * i));
      if (!std::isfinite(f)) {
        throw FormatError("tensor '" + t.name + "' holds a non-finite value", payload_start + offset + 4 * i);
      }
      t.data[i] = f;
    }
    out.tensors.push_back(std::move(t));
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    if (ranges[i].first < ranges[i - 1].first + ranges[i - 1].second) {
      throw FormatError("tensor byte ranges overlap", payload_start + ranges[i].first);
    }
  }
  header.erase("schema_version");
  header.erase("tensors");
  out.metadata = std::move(header);
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_container(const std::filesystem::path& path, const ContainerData& data) {
  write_file_bytes(path, encode_container(data));
}

ContainerData read_container(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_container(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("sha256 computation failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file_bytes(path)); }

}  // namespace spg
