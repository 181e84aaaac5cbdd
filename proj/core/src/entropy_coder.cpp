#include "nervboost/entropy_coder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nervboost/cem_quantization.hpp"
#include "nervboost/errors.hpp"

namespace {

bool valid_view(const nrvb_cdf_view* cdf) {
  if (cdf == nullptr || cdf->cdf == nullptr) return false;
  if (cdf->precision < 1 || cdf->precision > NRVB_RANS_PRECISION) return false;
  if (cdf->s_min > cdf->s_max) return false;
  const int64_t bins = int64_t{cdf->s_max} - cdf->s_min + 1;
  if (cdf->cdf_len != static_cast<size_t>(bins) + 1) return false;
  if (cdf->cdf[0] != 0 || cdf->cdf[cdf->cdf_len - 1] != (1u << cdf->precision)) return false;
  for (size_t i = 1; i < cdf->cdf_len; ++i) {
    if (cdf->cdf[i] <= cdf->cdf[i - 1]) return false;
  }
  return true;
}

}  // namespace

extern "C" {

size_t nrvb_max_encoded_size(size_t n) { return 2 * n + 4; }

nrvb_status nrvb_ref_encode(const int32_t* symbols, size_t n, const nrvb_cdf_view* cdf,
                            uint8_t* out, size_t out_capacity, size_t* out_len) {
  if ((symbols == nullptr && n != 0) || out == nullptr || out_len == nullptr || !valid_view(cdf)) {
    return NRVB_ERR_ARGUMENT;
  }
  const uint32_t prec = cdf->precision;
  // Emitted bytes are collected back to front at the tail of `out`, behind room
  // for the 4-byte state.
  size_t tail = out_capacity;
  uint32_t x = NRVB_RANS_STATE_LOWER;
  for (size_t i = n; i-- > 0;) {
    const int32_t s = symbols[i];
    if (s < cdf->s_min || s > cdf->s_max) return NRVB_ERR_SYMBOL_RANGE;
    const size_t k = static_cast<size_t>(int64_t{s} - cdf->s_min);
    const uint32_t start = cdf->cdf[k];
    const uint32_t freq = cdf->cdf[k + 1] - start;
    const uint32_t x_max = ((NRVB_RANS_STATE_LOWER >> prec) << NRVB_RANS_IO_BITS) * freq;
    while (x >= x_max) {
      if (tail <= 4) return NRVB_ERR_CAPACITY;
      out[--tail] = static_cast<uint8_t>(x & 0xff);
      x >>= NRVB_RANS_IO_BITS;
    }
    x = ((x / freq) << prec) + (x % freq) + start;
  }
  if (tail < 4) return NRVB_ERR_CAPACITY;
  const size_t body = out_capacity - tail;
  // Move the body right behind the state header.
  for (size_t i = 0; i < body; ++i) out[4 + i] = out[tail + i];
  for (int b = 0; b < 4; ++b) out[b] = static_cast<uint8_t>(x >> (8 * b));
  *out_len = body + 4;
  return NRVB_OK;
}

nrvb_status nrvb_ref_decode(const uint8_t* bytes, size_t len, size_t n, const nrvb_cdf_view* cdf,
                            int32_t* out) {
  if ((bytes == nullptr && len != 0) || (out == nullptr && n != 0) || !valid_view(cdf)) {
    return NRVB_ERR_ARGUMENT;
  }
  if (len < 4) return NRVB_ERR_TRUNCATED;
  const uint32_t prec = cdf->precision;
  const uint32_t mask = (1u << prec) - 1;
  uint32_t x = 0;
  for (int b = 0; b < 4; ++b) x |= uint32_t{bytes[b]} << (8 * b);
  size_t pos = 4;
  const uint32_t* first = cdf->cdf;
  const uint32_t* last = cdf->cdf + cdf->cdf_len;
  for (size_t i = 0; i < n; ++i) {
    const uint32_t slot = x & mask;
    const size_t k = static_cast<size_t>(std::upper_bound(first, last, slot) - first) - 1;
    const uint32_t start = cdf->cdf[k];
    const uint32_t freq = cdf->cdf[k + 1] - start;
    x = freq * (x >> prec) + slot - start;
    while (x < NRVB_RANS_STATE_LOWER) {
      if (pos >= len) return NRVB_ERR_TRUNCATED;
      x = (x << NRVB_RANS_IO_BITS) | bytes[pos++];
    }
    out[i] = static_cast<int32_t>(cdf->s_min + static_cast<int64_t>(k));
  }
  if (x != NRVB_RANS_STATE_LOWER || pos != len) return NRVB_ERR_CORRUPT;
  return NRVB_OK;
}

}  // extern "C"

namespace nervboost {

uint32_t CdfTable::frequency(int32_t symbol) const {
  const size_t k = static_cast<size_t>(int64_t{symbol} - s_min);
  return cdf[k + 1] - cdf[k];
}

nrvb_cdf_view CdfTable::view() const {
  return {static_cast<uint32_t>(precision), cdf.data(), cdf.size(), s_min, s_max};
}

double CdfTable::symbol_bits(int32_t symbol) const {
  return static_cast<double>(precision) - std::log2(static_cast<double>(frequency(symbol)));
}

void validate_cdf(const CdfTable& table) {
  const auto view = table.view();
  if (!valid_view(&view)) {
    throw ConfigError("malformed CDF table over [" + std::to_string(table.s_min) + ", " +
                      std::to_string(table.s_max) + "]");
  }
}

CdfTable build_cdf_table(float mu, float sigma, int32_t s_min, int32_t s_max, int precision) {
  if (precision < 1 || precision > kCdfPrecision) throw ConfigError("CDF precision must be 1..16");
  if (s_min > s_max) throw ConfigError("CDF range is empty (s_min > s_max)");
  const int64_t n = int64_t{s_max} - s_min + 1;
  const int64_t total = int64_t{1} << precision;
  if (n > total) {
    throw ConfigError("symbol range of " + std::to_string(n) + " values exceeds the " +
                      std::to_string(total) + " slots of a " + std::to_string(precision) +
                      "-bit CDF");
  }
  if (!(sigma > 0.0f) || !std::isfinite(sigma) || !std::isfinite(mu)) {
    throw ConfigError("entropy model needs finite mu and positive sigma");
  }

  // Same floor as the rate, so a range lying wholly in a far tail still has mass.
  std::vector<double> p(static_cast<size_t>(n));
  double mass = 0.0;
  for (int64_t k = 0; k < n; ++k) {
    p[static_cast<size_t>(k)] =
        std::max(symbol_probability(static_cast<double>(s_min + k), mu, sigma), kProbMin);
    mass += p[static_cast<size_t>(k)];
  }

  const int64_t spare = total - n;
  std::vector<int64_t> counts(static_cast<size_t>(n), 1);
  std::vector<double> frac(static_cast<size_t>(n));
  int64_t used = 0;
  for (size_t k = 0; k < p.size(); ++k) {
    const double share = p[k] / mass * static_cast<double>(spare);
    const auto whole = static_cast<int64_t>(std::floor(share));
    counts[k] += whole;
    frac[k] = share - static_cast<double>(whole);
    used += whole;
  }
  std::vector<size_t> order(p.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return frac[a] > frac[b]; });
  for (int64_t r = 0; r < spare - used; ++r) ++counts[order[static_cast<size_t>(r) % order.size()]];

  CdfTable table;
  table.precision = precision;
  table.s_min = s_min;
  table.s_max = s_max;
  table.cdf.resize(static_cast<size_t>(n) + 1);
  table.cdf[0] = 0;
  for (size_t k = 0; k < counts.size(); ++k) {
    table.cdf[k + 1] = table.cdf[k] + static_cast<uint32_t>(counts[k]);
  }
  return table;
}

namespace {

std::vector<uint8_t> encode_with(nrvb_encode_fn fn, std::span<const int32_t> symbols,
                                 const CdfTable& cdf) {
  validate_cdf(cdf);
  std::vector<uint8_t> out(nrvb_max_encoded_size(symbols.size()));
  size_t len = 0;
  const auto view = cdf.view();
  const auto status = fn(symbols.data(), symbols.size(), &view, out.data(), out.size(), &len);
  if (status == NRVB_ERR_SYMBOL_RANGE) {
    throw ConfigError("symbol outside the CDF range [" + std::to_string(cdf.s_min) + ", " +
                      std::to_string(cdf.s_max) + "]");
  }
  if (status != NRVB_OK) throw ConfigError("entropy encoder failed with status " + std::to_string(status));
  out.resize(len);
  return out;
}

std::vector<int32_t> decode_with(nrvb_decode_fn fn, std::span<const uint8_t> bytes, size_t count,
                                 const CdfTable& cdf) {
  validate_cdf(cdf);
  std::vector<int32_t> out(count);
  const auto view = cdf.view();
  switch (fn(bytes.data(), bytes.size(), count, &view, out.data())) {
    case NRVB_OK:
      return out;
    case NRVB_ERR_TRUNCATED:
      throw DecodeError(DecodeErrorKind::Truncated, "payload ended before all symbols were decoded");
    case NRVB_ERR_CORRUPT:
      throw DecodeError(DecodeErrorKind::CorruptPayload, "payload does not end in the initial coder state");
    default:
      throw DecodeError(DecodeErrorKind::CorruptPayload, "entropy decoder rejected its arguments");
  }
}

}  // namespace

std::vector<uint8_t> ReferenceCoder::encode(std::span<const int32_t> symbols,
                                            const CdfTable& cdf) const {
  return encode_with(&nrvb_ref_encode, symbols, cdf);
}

std::vector<int32_t> ReferenceCoder::decode(std::span<const uint8_t> bytes, size_t count,
                                            const CdfTable& cdf) const {
  return decode_with(&nrvb_ref_decode, bytes, count, cdf);
}

FfiCoder::FfiCoder(nrvb_encode_fn encode, nrvb_decode_fn decode) : encode_(encode), decode_(decode) {
  if (encode_ == nullptr || decode_ == nullptr) throw ConfigError("FfiCoder needs both entry points");
}

std::vector<uint8_t> FfiCoder::encode(std::span<const int32_t> symbols, const CdfTable& cdf) const {
  return encode_with(encode_, symbols, cdf);
}

std::vector<int32_t> FfiCoder::decode(std::span<const uint8_t> bytes, size_t count,
                                      const CdfTable& cdf) const {
  return decode_with(decode_, bytes, count, cdf);
}

const EntropyCoder& reference_coder() {
  static const ReferenceCoder coder;
  return coder;
}

}  // namespace nervboost
