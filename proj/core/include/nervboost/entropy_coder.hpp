#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "nervboost/coder_abi.h"

namespace nervboost {

inline constexpr int kCdfPrecision = 16;
inline constexpr uint32_t kRansLower = NRVB_RANS_STATE_LOWER;

/// Integer CDF over [s_min, s_max]; cdf.size() == s_max - s_min + 2.
struct CdfTable {
  int precision = kCdfPrecision;
  int32_t s_min = 0;
  int32_t s_max = 0;
  std::vector<uint32_t> cdf;

  size_t bins() const { return cdf.empty() ? 0 : cdf.size() - 1; }
  uint32_t frequency(int32_t symbol) const;
  nrvb_cdf_view view() const;
  /// -log2(frequency / 2^precision), the ideal cost of one symbol under this table.
  double symbol_bits(int32_t symbol) const;
};

/// Discretizes the Gaussian symbol model. Each bin receives 1 count, the remaining
/// 2^precision - n counts are split in proportion to the probabilities, and leftover
/// counts go to the largest fractional parts (lower index first on ties).
CdfTable build_cdf_table(float mu, float sigma, int32_t s_min, int32_t s_max,
                         int precision = kCdfPrecision);

/// Throws ConfigError unless the table is strictly increasing from 0 to 2^precision.
void validate_cdf(const CdfTable& table);

class EntropyCoder {
 public:
  virtual ~EntropyCoder() = default;
  virtual std::vector<uint8_t> encode(std::span<const int32_t> symbols, const CdfTable& cdf) const = 0;
  virtual std::vector<int32_t> decode(std::span<const uint8_t> bytes, size_t count,
                                      const CdfTable& cdf) const = 0;
};

/// Portable rANS coder; the default backend.
class ReferenceCoder final : public EntropyCoder {
 public:
  std::vector<uint8_t> encode(std::span<const int32_t> symbols, const CdfTable& cdf) const override;
  std::vector<int32_t> decode(std::span<const uint8_t> bytes, size_t count,
                              const CdfTable& cdf) const override;
};

/// Adapter for any backend exposing the C entry points of coder_abi.h.
class FfiCoder final : public EntropyCoder {
 public:
  FfiCoder(nrvb_encode_fn encode, nrvb_decode_fn decode);
  std::vector<uint8_t> encode(std::span<const int32_t> symbols, const CdfTable& cdf) const override;
  std::vector<int32_t> decode(std::span<const uint8_t> bytes, size_t count,
                              const CdfTable& cdf) const override;

 private:
  nrvb_encode_fn encode_;
  nrvb_decode_fn decode_;
};

const EntropyCoder& reference_coder();

}  // namespace nervboost
