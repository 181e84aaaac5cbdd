#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nervboost/entropy_coder.hpp"

namespace nervboost {

inline constexpr char kBitstreamMagic[4] = {'N', 'R', 'V', 'B'};
inline constexpr uint16_t kBitstreamVersion = 1;

/// One entropy-coded tensor: integer symbols plus the scalars needed to decode and
/// dequantize them.
struct QuantizedTensorRecord {
  std::string name;
  std::vector<uint32_t> shape;
  std::vector<int32_t> symbols;
  float scale = 1.0f;
  float offset = 0.0f;
  float mu = 0.0f;
  float sigma = 1.0f;
  int32_t s_min = 0;
  int32_t s_max = 0;

  int64_t numel() const;
  bool operator==(const QuantizedTensorRecord&) const = default;
};

/// Record with s_min/s_max taken from the symbols (0, 0 when there are none).
QuantizedTensorRecord make_record(std::string name, std::vector<uint32_t> shape,
                                  std::vector<int32_t> symbols, float scale, float offset,
                                  float mu, float sigma);

/// Bytes a record spends outside its payload.
size_t record_overhead_bytes(const QuantizedTensorRecord& r);

/// Layout: "NRVB", u16 version, u32 record count, then per record
///   u16 name length, name bytes, u8 rank, u32 dims[rank], f32 scale, f32 offset,
///   f32 mu, f32 sigma, i32 s_min, i32 s_max, u64 payload length, payload.
/// All integers and floats little-endian.
std::vector<uint8_t> encode_bitstream(const std::vector<QuantizedTensorRecord>& records,
                                      const EntropyCoder& coder = reference_coder());

/// Throws DecodeError with a kind for bad magic, unknown version, truncation, header
/// inconsistencies, range problems and payload corruption.
std::vector<QuantizedTensorRecord> decode_bitstream(std::span<const uint8_t> bytes,
                                                    const EntropyCoder& coder = reference_coder());

/// Size of each record's payload in an encoded stream, in record order.
std::vector<uint64_t> payload_sizes(std::span<const uint8_t> bytes);

void write_file(const std::string& path, std::span<const uint8_t> bytes);
std::vector<uint8_t> read_file(const std::string& path);

}  // namespace nervboost
