#include <cstring>
#include <fstream>
#include <iterator>

#include "wfn/network.hpp"

namespace wfn {
namespace {

constexpr char kMagic[4] = {'W', 'F', 'N', '1'};
constexpr std::uint8_t kFloat64 = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <class T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    uint<std::uint64_t>(bits);
  }
  std::vector<unsigned char>& buffer() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> data) : data_(std::move(data)) {}
  const unsigned char* take(std::size_t n) {
    if (pos_ + n > data_.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    const unsigned char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <class T>
  T uint() {
    const unsigned char* p = take(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
    return v;
  }
  double f64() {
    const auto bits = uint<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return data_.size(); }
  const unsigned char* at(std::size_t p) const { return data_.data() + p; }

 private:
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const ParameterSet& ps = model.parameters();
  Writer w;
  w.bytes(kMagic, 4);
  const std::string cfg = format_key_values(model.config().to_key_values());
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg.data(), cfg.size());
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string& name = ps.name(i);
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.uint<std::uint8_t>(kFloat64);
    const Shape& s = ps.value(i).shape();
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(s.size()));
    for (auto e : s) w.uint<std::uint64_t>(static_cast<std::uint64_t>(e));
  }
  const std::size_t payload_start = w.buffer().size();
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (double v : ps.value(i).data()) w.f64(v);
  const auto& buf = w.buffer();
  w.uint<std::uint64_t>(fnv1a64(buf.data() + payload_start, buf.size() - payload_start));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(w.buffer().data()), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {}));

  if (std::memcmp(r.take(4), kMagic, 4) != 0) throw CheckpointError("not a WFN1 checkpoint: bad magic or version");
  const auto cfg_len = r.uint<std::uint32_t>();
  const auto* cfg_bytes = r.take(cfg_len);
  const NetworkConfig cfg =
      NetworkConfig::from_key_values(parse_key_values(std::string(reinterpret_cast<const char*>(cfg_bytes), cfg_len)));

  struct Entry {
    std::string name;
    Shape shape;
  };
  const auto count = r.uint<std::uint32_t>();
  std::vector<Entry> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto len = r.uint<std::uint16_t>();
    e.name.assign(reinterpret_cast<const char*>(r.take(len)), len);
    if (r.uint<std::uint8_t>() != kFloat64) throw CheckpointError("unsupported dtype for '" + e.name + "'");
    const auto rank = r.uint<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) e.shape.push_back(static_cast<std::int64_t>(r.uint<std::uint64_t>()));
    manifest.push_back(std::move(e));
  }

  std::int64_t payload_values = 0;
  for (const auto& e : manifest) payload_values += shape_numel(e.shape);
  const std::size_t payload_start = r.pos();
  const std::size_t payload_bytes = static_cast<std::size_t>(payload_values) * 8;
  if (r.size() != payload_start + payload_bytes + 8) {
    throw CheckpointError("checkpoint size does not match its manifest (truncated or trailing data)");
  }
  const std::uint64_t expected = fnv1a64(r.at(payload_start), payload_bytes);

  Model model = Model::build(cfg, 0);
  ParameterSet& ps = model.parameters();
  if (ps.size() != manifest.size()) throw CheckpointError("checkpoint parameter count does not match its config");
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (manifest[i].name != ps.name(i) || manifest[i].shape != ps.value(i).shape()) {
      throw CheckpointError("manifest entry '" + manifest[i].name + "' " + to_string(manifest[i].shape) +
                            " does not match model parameter '" + ps.name(i) + "' " + to_string(ps.value(i).shape()));
    }
  }
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (double& v : ps.value(i).data()) v = r.f64();
  if (r.uint<std::uint64_t>() != expected) throw CheckpointError("checkpoint checksum mismatch: payload is corrupt");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps.value(i).all_finite()) throw CheckpointError("non-finite value in parameter '" + ps.name(i) + "'");
  }
  return model;
}

Model load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected) {
  Model m = load_checkpoint(path);
  if (!(m.config() == expected)) {
    const auto got = m.config().to_key_values();
    const auto want = expected.to_key_values();
    std::string diff;
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (got[i].second != want[i].second) {
        diff += " " + got[i].first + " = " + got[i].second + " (expected " + want[i].second + ")";
      }
    }
    throw ConfigError("checkpoint config mismatch:" + diff);
  }
  return m;
}

}  // namespace wfn
