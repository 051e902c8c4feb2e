#include "dinorade/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "dinorade/errors.hpp"

namespace dinorade {

namespace {

using Kind = FormatError::Kind;

constexpr std::size_t kMagicSize = 8;

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

std::uint64_t to_le64(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return (static_cast<std::uint64_t>(to_le(static_cast<std::uint32_t>(v))) << 32) |
         to_le(static_cast<std::uint32_t>(v >> 32));
}

std::size_t count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

const Payload& Container::payload(const std::string& name) const {
  for (const auto& p : payloads)
    if (p.name == name) return p;
  throw FormatError(Kind::kMalformedHeader, "missing payload '" + name + "'");
}

void write_container(const std::filesystem::path& path, const std::string& magic,
                     nlohmann::json header, const std::vector<Payload>& payloads) {
  if (magic.size() != kMagicSize) throw ConfigError("container magic must be 8 bytes");
  header["dtype"] = "float32le";
  header["payloads"] = nlohmann::json::array();
  for (const auto& p : payloads) {
    if (count(p.shape) != p.data.size())
      throw ConfigError("payload '" + p.name + "' data does not match its shape");
    header["payloads"].push_back({{"name", p.name}, {"shape", p.shape}});
  }
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(magic.data(), kMagicSize);
  const std::uint64_t len = to_le64(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : payloads) {
    if constexpr (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(p.data.data()),
                static_cast<std::streamsize>(p.data.size() * sizeof(float)));
    } else {
      for (float f : p.data) {
        const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(f));
        out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
      }
    }
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path, const std::string& magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in '" + path.string() + "'";

  if (bytes.size() < kMagicSize + sizeof(std::uint64_t))
    throw FormatError(Kind::kTruncated, "file shorter than its fixed preamble" + where);
  if (bytes.compare(0, kMagicSize, magic) != 0)
    throw FormatError(Kind::kMalformedHeader, "bad magic (expected " + magic + ")" + where);
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + kMagicSize, sizeof len);
  len = to_le64(len);
  const std::size_t body = kMagicSize + sizeof len;
  if (len > bytes.size() - body) throw FormatError(Kind::kTruncated, "header truncated" + where);

  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(body),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(body + len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(Kind::kMalformedHeader, std::string("header is not valid JSON: ") + e.what() + where);
  }
  if (!c.header.is_object() || c.header.value("dtype", "") != "float32le" ||
      !c.header.contains("payloads") || !c.header["payloads"].is_array())
    throw FormatError(Kind::kMalformedHeader, "header lacks dtype/payload declarations" + where);

  std::size_t offset = body + len;
  for (const auto& decl : c.header["payloads"]) {
    Payload p;
    try {
      p.name = decl.at("name").get<std::string>();
      p.shape = decl.at("shape").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(Kind::kMalformedHeader, std::string("bad payload declaration: ") + e.what() + where);
    }
    if (p.shape.empty())
      throw FormatError(Kind::kDimension, "payload '" + p.name + "' has no dimensions" + where);
    for (int d : p.shape)
      if (d <= 0)
        throw FormatError(Kind::kDimension,
                          "payload '" + p.name + "' has non-positive dimension " + std::to_string(d) + where);
    const std::size_t n = count(p.shape);
    if (n * sizeof(float) > bytes.size() - offset)
      throw FormatError(Kind::kTruncated, "payload '" + p.name + "' truncated" + where);
    p.data.resize(n);
    std::memcpy(p.data.data(), bytes.data() + offset, n * sizeof(float));
    if constexpr (std::endian::native != std::endian::little) {
      for (float& f : p.data) f = std::bit_cast<float>(to_le(std::bit_cast<std::uint32_t>(f)));
    }
    offset += n * sizeof(float);
    c.payloads.push_back(std::move(p));
  }
  if (offset != bytes.size())
    throw FormatError(Kind::kMalformedHeader, "trailing bytes after declared payloads" + where);
  return c;
}

}  // namespace dinorade
