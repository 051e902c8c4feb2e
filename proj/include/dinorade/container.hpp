#pragma once

// Binary container shared by frame files and weight checkpoints:
//
//   bytes 0..7    ASCII magic (e.g. "DRFRAME1", "DRCKPT01")
//   bytes 8..15   uint64 little-endian length N of the JSON header
//   next N bytes  UTF-8 JSON header; header["payloads"] lists {name, shape}
//   remainder     little-endian float32 payloads, concatenated in listed order
//
// docs/format.md documents the frame-specific header fields.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace dinorade {

struct Payload {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct Container {
  nlohmann::json header;
  std::vector<Payload> payloads;

  const Payload& payload(const std::string& name) const;
};

void write_container(const std::filesystem::path& path, const std::string& magic,
                     nlohmann::json header, const std::vector<Payload>& payloads);

/// Throws FormatError with kind kMalformedHeader, kDimension or kTruncated.
Container read_container(const std::filesystem::path& path, const std::string& magic);

}  // namespace dinorade
