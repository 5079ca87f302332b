#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "ckl/errors.hpp"
#include "ckl/training.hpp"

namespace ckl {
namespace {

constexpr char kMagic[4] = {'C', 'K', 'L', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string buf) : buf_(std::move(buf)) {}

  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated at byte " + std::to_string(pos_));
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str() {
    const auto n = u32();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string raw(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

std::vector<NamedTensor> awl_tensors(const AwlParams& awl) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < kNumLosses; ++i) out.emplace_back("awl.s" + std::to_string(i + 1), awl.s[i]);
  return out;
}

}  // namespace

std::string config_mismatch(const ModelConfig& expected, const ModelConfig& actual, ConfigMatch match) {
  const auto a = expected.to_map(), b = actual.to_map();
  std::string out;
  for (const auto& [key, value] : a) {
    const auto& other = b.at(key);
    if (other == value) continue;
    if (match == ConfigMatch::kArchitecture && key.rfind("use_", 0) == 0) continue;
    if (!out.empty()) out += ", ";
    out += key + "=" + other + " (expected " + value + ")";
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const CklModel& model, const AwlParams* awl) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  const auto config = model.config().to_map();
  w.u32(static_cast<std::uint32_t>(config.size()));
  for (const auto& [k, v] : config) {
    w.str(k);
    w.str(v);
  }
  auto tensors = model.named_parameters();
  if (awl) {
    auto extra = awl_tensors(*awl);
    tensors.insert(tensors.end(), extra.begin(), extra.end());
  }
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str());
  if (r.raw(4) != std::string(kMagic, 4)) throw CheckpointError(path.string() + " is not a CKL1 checkpoint");

  std::map<std::string, std::string> values;
  const auto n_config = r.u32();
  for (std::uint32_t i = 0; i < n_config; ++i) {
    auto key = r.str();
    values[key] = r.str();
  }
  Checkpoint ck;
  try {
    ck.config = ModelConfig::from_map(values);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint config is invalid: ") + e.what());
  }
  const auto n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = r.str();
    const auto ndim = r.u32();
    if (ndim > 8) throw CheckpointError("tensor " + name + " has implausible rank " + std::to_string(ndim));
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(static_cast<std::size_t>(r.u64()));
      numel *= shape.back();
      if (numel > (std::uint64_t{1} << 36)) throw CheckpointError("tensor " + name + " is implausibly large");
    }
    r.need(numel * 8);
    std::vector<double> data(numel);
    for (auto& v : data) v = r.f64();
    ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw CheckpointError("checkpoint has trailing bytes");
  return ck;
}

void load_checkpoint(const std::filesystem::path& path, CklModel& model, AwlParams* awl, ConfigMatch match) {
  const auto ck = read_checkpoint(path);
  if (auto diff = config_mismatch(model.config(), ck.config, match); !diff.empty()) {
    throw CheckpointError("checkpoint config does not match: " + diff);
  }
  std::map<std::string, const Tensor*> stored;
  for (const auto& [name, t] : ck.tensors) stored[name] = &t;

  auto targets = model.named_parameters();
  if (awl) {
    auto extra = awl_tensors(*awl);
    if (stored.count(extra.front().first)) targets.insert(targets.end(), extra.begin(), extra.end());
  }
  for (const auto& [name, t] : targets) {
    auto it = stored.find(name);
    if (it == stored.end()) throw CheckpointError("checkpoint is missing tensor " + name);
    if (it->second->shape() != t.shape()) {
      throw CheckpointError("tensor " + name + " has shape " + shape_to_string(it->second->shape()) +
                            ", model expects " + shape_to_string(t.shape()));
    }
  }
  for (auto& [name, t] : targets) {
    auto src = stored.at(name)->data();
    auto dst = t.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace ckl
