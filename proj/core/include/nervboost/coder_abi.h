/* C interface shared by the reference rANS coder and external coding kernels.
 *
 * Coder constants (normative; any backend must reproduce them exactly):
 *   - 32-bit state x, lower bound L = 2^23, so x lives in [2^23, 2^31) between symbols
 *   - 16-bit CDF precision (cdf[n] == 65536)
 *   - renormalization emits/consumes one byte at a time
 *   - symbols are encoded last to first; the stream starts with the final encoder
 *     state as 4 little-endian bytes, followed by renormalization bytes in decode order
 *   - encoding starts from x = L and a valid decode ends with x == L
 *   - an empty symbol array encodes to exactly the 4-byte state L
 *
 * Encode step for a symbol with frequency f and cumulative start c:
 *   while (x >= ((L >> 16) << 8) * f) { emit(x & 0xff); x >>= 8; }
 *   x = ((x / f) << 16) + (x % f) + c;
 * Decode step:
 *   slot = x & 0xffff; s = symbol with cdf[s] <= slot < cdf[s + 1];
 *   x = f * (x >> 16) + slot - c;
 *   while (x < L) x = (x << 8) | next_byte();
 */
#ifndef NERVBOOST_CODER_ABI_H
#define NERVBOOST_CODER_ABI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define NRVB_RANS_STATE_LOWER (1u << 23)
#define NRVB_RANS_PRECISION 16u
#define NRVB_RANS_IO_BITS 8u

/* Cumulative frequency table over symbols s_min..s_max.
 * cdf has (s_max - s_min + 2) entries, cdf[0] == 0, cdf[last] == 1 << precision,
 * strictly increasing. */
typedef struct nrvb_cdf_view {
  uint32_t precision;
  const uint32_t* cdf;
  size_t cdf_len;
  int32_t s_min;
  int32_t s_max;
} nrvb_cdf_view;

typedef enum nrvb_status {
  NRVB_OK = 0,
  NRVB_ERR_ARGUMENT = 1,     /* null pointer, malformed CDF, unsupported precision */
  NRVB_ERR_SYMBOL_RANGE = 2, /* symbol outside [s_min, s_max] */
  NRVB_ERR_CAPACITY = 3,     /* output buffer too small */
  NRVB_ERR_TRUNCATED = 4,    /* ran out of input bytes */
  NRVB_ERR_CORRUPT = 5       /* final state mismatch or trailing bytes */
} nrvb_status;

/* Upper bound on the encoded size of n symbols (two bytes per symbol plus the state). */
size_t nrvb_max_encoded_size(size_t n);

nrvb_status nrvb_ref_encode(const int32_t* symbols, size_t n, const nrvb_cdf_view* cdf,
                            uint8_t* out, size_t out_capacity, size_t* out_len);

nrvb_status nrvb_ref_decode(const uint8_t* bytes, size_t len, size_t n, const nrvb_cdf_view* cdf,
                            int32_t* out);

typedef nrvb_status (*nrvb_encode_fn)(const int32_t* symbols, size_t n, const nrvb_cdf_view* cdf,
                                      uint8_t* out, size_t out_capacity, size_t* out_len);
typedef nrvb_status (*nrvb_decode_fn)(const uint8_t* bytes, size_t len, size_t n,
                                      const nrvb_cdf_view* cdf, int32_t* out);

#ifdef __cplusplus
}
#endif

#endif /* NERVBOOST_CODER_ABI_H */
