#include "nervboost/bitstream_codec.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "nervboost/errors.hpp"

namespace nervboost {

const char* to_string(DecodeErrorKind kind) {
  switch (kind) {
    case DecodeErrorKind::BadMagic:
      return "bad magic";
    case DecodeErrorKind::UnsupportedVersion:
      return "unsupported version";
    case DecodeErrorKind::Truncated:
      return "truncated stream";
    case DecodeErrorKind::CorruptHeader:
      return "corrupt header";
    case DecodeErrorKind::RangeMismatch:
      return "symbol range / CDF mismatch";
    case DecodeErrorKind::CorruptPayload:
      return "corrupt payload";
    case DecodeErrorKind::ConfigHashMismatch:
      return "config hash mismatch";
  }
  return "decode error";
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class Writer {
 public:
  explicit Writer(std::vector<uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    out_.insert(out_.end(), raw, raw + sizeof(T));
  }
  void bytes(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }

 private:
  std::vector<uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    uint8_t raw[sizeof(T)];
    std::memcpy(raw, in_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }
  std::span<const uint8_t> take(size_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }
  size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw DecodeError(DecodeErrorKind::Truncated, std::string("stream ends inside ") + what);
    }
  }
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
};

void check_record(const QuantizedTensorRecord& r) {
  if (r.name.size() > std::numeric_limits<uint16_t>::max()) {
    throw ConfigError("record name too long: " + r.name.substr(0, 32) + "...");
  }
  if (r.shape.size() > std::numeric_limits<uint8_t>::max()) {
    throw ConfigError("record '" + r.name + "' has rank above 255");
  }
  if (r.numel() != static_cast<int64_t>(r.symbols.size())) {
    throw ConfigError("record '" + r.name + "': shape holds " + std::to_string(r.numel()) +
                      " elements but " + std::to_string(r.symbols.size()) + " symbols were given");
  }
  for (int32_t s : r.symbols) {
    if (s < r.s_min || s > r.s_max) {
      throw ConfigError("record '" + r.name + "': symbol " + std::to_string(s) +
                        " outside declared range [" + std::to_string(r.s_min) + ", " +
                        std::to_string(r.s_max) + "]");
    }
  }
}

}  // namespace

int64_t QuantizedTensorRecord::numel() const {
  int64_t n = 1;
  for (uint32_t d : shape) n *= d;
  return n;
}

QuantizedTensorRecord make_record(std::string name, std::vector<uint32_t> shape,
                                  std::vector<int32_t> symbols, float scale, float offset,
                                  float mu, float sigma) {
  QuantizedTensorRecord r;
  r.name = std::move(name);
  r.shape = std::move(shape);
  r.scale = scale;
  r.offset = offset;
  r.mu = mu;
  r.sigma = sigma;
  if (!symbols.empty()) {
    const auto [lo, hi] = std::minmax_element(symbols.begin(), symbols.end());
    r.s_min = *lo;
    r.s_max = *hi;
  }
  r.symbols = std::move(symbols);
  return r;
}

size_t record_overhead_bytes(const QuantizedTensorRecord& r) {
  return 2 + r.name.size() + 1 + 4 * r.shape.size() + 4 * 4 + 2 * 4 + 8;
}

std::vector<uint8_t> encode_bitstream(const std::vector<QuantizedTensorRecord>& records,
                                      const EntropyCoder& coder) {
  if (records.size() > std::numeric_limits<uint32_t>::max()) throw ConfigError("too many records");
  std::vector<uint8_t> out;
  Writer w(out);
  w.bytes(kBitstreamMagic, 4);
  w.put<uint16_t>(kBitstreamVersion);
  w.put<uint32_t>(static_cast<uint32_t>(records.size()));
  for (const auto& r : records) {
    check_record(r);
    const auto cdf = build_cdf_table(r.mu, r.sigma, r.s_min, r.s_max);
    const auto payload = coder.encode(r.symbols, cdf);
    w.put<uint16_t>(static_cast<uint16_t>(r.name.size()));
    w.bytes(r.name.data(), r.name.size());
    w.put<uint8_t>(static_cast<uint8_t>(r.shape.size()));
    for (uint32_t d : r.shape) w.put<uint32_t>(d);
    w.put<float>(r.scale);
    w.put<float>(r.offset);
    w.put<float>(r.mu);
    w.put<float>(r.sigma);
    w.put<int32_t>(r.s_min);
    w.put<int32_t>(r.s_max);
    w.put<uint64_t>(payload.size());
    w.bytes(payload.data(), payload.size());
  }
  return out;
}

namespace {

struct RawRecord {
  QuantizedTensorRecord meta;
  std::span<const uint8_t> payload;
};

std::vector<RawRecord> parse(std::span<const uint8_t> bytes) {
  Reader rd(bytes);
  const auto magic = rd.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kBitstreamMagic)) {
    throw DecodeError(DecodeErrorKind::BadMagic, "stream does not start with NRVB");
  }
  const auto version = rd.get<uint16_t>("version");
  if (version != kBitstreamVersion) {
    throw DecodeError(DecodeErrorKind::UnsupportedVersion,
                      "stream version " + std::to_string(version) + ", this build reads " +
                          std::to_string(kBitstreamVersion));
  }
  const auto count = rd.get<uint32_t>("record count");
  // Smallest possible record is 35 bytes; reject counts the stream cannot hold.
  if (count > rd.remaining() / 35 + 1) {
    throw DecodeError(DecodeErrorKind::CorruptHeader,
                      "record count " + std::to_string(count) + " exceeds stream size");
  }
  std::vector<RawRecord> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    RawRecord raw;
    auto& r = raw.meta;
    const auto name_len = rd.get<uint16_t>("name length");
    const auto name = rd.take(name_len, "record name");
    r.name.assign(name.begin(), name.end());
    const auto rank = rd.get<uint8_t>("rank");
    for (int d = 0; d < rank; ++d) r.shape.push_back(rd.get<uint32_t>("shape"));
    r.scale = rd.get<float>("scale");
    r.offset = rd.get<float>("offset");
    r.mu = rd.get<float>("mu");
    r.sigma = rd.get<float>("sigma");
    r.s_min = rd.get<int32_t>("s_min");
    r.s_max = rd.get<int32_t>("s_max");
    const auto len = rd.get<uint64_t>("payload length");
    if (len > rd.remaining()) {
      throw DecodeError(DecodeErrorKind::Truncated,
                        "record '" + r.name + "' declares " + std::to_string(len) +
                            " payload bytes, " + std::to_string(rd.remaining()) + " remain");
    }
    raw.payload = rd.take(static_cast<size_t>(len), "payload");
    out.push_back(std::move(raw));
  }
  if (!rd.done()) {
    throw DecodeError(DecodeErrorKind::CorruptHeader,
                      std::to_string(rd.remaining()) + " trailing bytes after the last record");
  }
  return out;
}

}  // namespace

std::vector<QuantizedTensorRecord> decode_bitstream(std::span<const uint8_t> bytes,
                                                    const EntropyCoder& coder) {
  std::vector<QuantizedTensorRecord> records;
  for (auto& raw : parse(bytes)) {
    auto& r = raw.meta;
    const int64_t n = r.numel();
    // The cheapest symbol costs about 2^-15 bits, which bounds the count a payload
    // of this size can carry.
    if (n < 0 || static_cast<uint64_t>(n) > 8 * (raw.payload.size() + 1) * 65536ull) {
      throw DecodeError(DecodeErrorKind::CorruptHeader, "record '" + r.name + "' shape is implausible");
    }
    CdfTable cdf;
    try {
      cdf = build_cdf_table(r.mu, r.sigma, r.s_min, r.s_max);
    } catch (const ConfigError& e) {
      throw DecodeError(DecodeErrorKind::RangeMismatch, "record '" + r.name + "': " + e.what());
    }
    r.symbols = coder.decode(raw.payload, static_cast<size_t>(n), cdf);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<uint64_t> payload_sizes(std::span<const uint8_t> bytes) {
  std::vector<uint64_t> sizes;
  for (const auto& raw : parse(bytes)) sizes.push_back(raw.payload.size());
  return sizes;
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace nervboost
