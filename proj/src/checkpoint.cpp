#include "cg2a/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "cg2a/errors.hpp"

namespace cg2a {

namespace {

constexpr char kMagic[8] = {'C', 'G', '2', 'A', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i)
      buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
  void put_real(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_reals(const std::vector<double>& v) {
    put<std::uint64_t>(v.size());
    for (double x : v) put_real(x);
  }
  void put_bytes(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  double get_real() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::vector<double> get_reals() {
    const auto n = get<std::uint64_t>();
    need(n * 8);
    std::vector<double> v(n);
    for (auto& x : v) x = get_real();
    return v;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > buf_.size() - pos_) throw IoError("checkpoint is truncated");
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string spec = ckpt.spec.canonical();
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointFormatVersion);
  w.put<std::uint32_t>(kFlattenOrderVersion);
  w.put<std::uint64_t>(ckpt.spec.hash());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.size()));
  w.put_bytes(spec.data(), spec.size());
  w.put<std::uint64_t>(ckpt.train_step);
  w.put_reals(ckpt.params.flatten());
  w.put<std::uint8_t>(ckpt.optimizer == OptimizerKind::Sgd ? 0 : 1);
  w.put<std::uint64_t>(ckpt.optimizer_state.step);
  w.put_reals(ckpt.optimizer_state.first_moment);
  w.put_reals(ckpt.optimizer_state.second_moment);
  w.put<std::uint64_t>(fnv1a(w.str()));
  write_file_atomic(path, w.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic + 8 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw IoError(path.string() + " is not a checkpoint file");
  }
  if (buf.size() < 8) throw IoError("checkpoint is truncated");
  const std::string body = buf.substr(0, buf.size() - 8);
  Reader r(buf);
  r.get_bytes(sizeof kMagic);
  if (r.get<std::uint32_t>() != kCheckpointFormatVersion) throw IoError("unsupported checkpoint format version");
  if (r.get<std::uint32_t>() != kFlattenOrderVersion) throw IoError("unsupported parameter flattening order");
  const auto spec_hash = r.get<std::uint64_t>();
  const auto spec_len = r.get<std::uint32_t>();
  Checkpoint ckpt;
  try {
    ckpt.spec = QNetworkSpec::parse(r.get_bytes(spec_len));
  } catch (const StructuralError& e) {
    throw IoError(std::string("checkpoint network spec is invalid: ") + e.what());
  }
  if (ckpt.spec.hash() != spec_hash) throw IoError("checkpoint spec hash mismatch");
  ckpt.train_step = r.get<std::uint64_t>();
  const auto flat = r.get_reals();
  if (flat.size() != ckpt.spec.param_count()) throw IoError("checkpoint parameter count mismatch");
  ckpt.params = ParamSet<float>::unflatten(ckpt.spec, flat);
  ckpt.optimizer = r.get<std::uint8_t>() == 0 ? OptimizerKind::Sgd : OptimizerKind::Adam;
  ckpt.optimizer_state.step = r.get<std::uint64_t>();
  ckpt.optimizer_state.first_moment = r.get_reals();
  ckpt.optimizer_state.second_moment = r.get_reals();
  if (r.pos() != body.size()) throw IoError("checkpoint has trailing bytes");
  if (r.get<std::uint64_t>() != fnv1a(body)) throw IoError("checkpoint checksum mismatch");
  return ckpt;
}

}  // namespace cg2a
