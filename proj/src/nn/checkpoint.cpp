#include "gridattack/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gridattack/errors.hpp"

namespace gridattack::nn {
namespace {

constexpr char kMagic[8] = {'G', 'A', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::string& out, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.append(s);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail(ErrorKind::Parse, "checkpoint truncated at byte " + std::to_string(pos_));
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string digest_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void Checkpoint::add(const std::string& prefix, const ParamRefs& params) {
  for (const auto& p : params) tensors.push_back({prefix + p.name, *p.value});
}

const Checkpoint::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void Checkpoint::load_into(const std::string& prefix, const ParamRefs& params) const {
  for (const auto& p : params) {
    const Tensor* t = find(prefix + p.name);
    if (!t) fail(ErrorKind::Compatibility, "checkpoint lacks tensor " + prefix + p.name);
    if (t->value.rows() != p.value->rows() || t->value.cols() != p.value->cols()) {
      fail(ErrorKind::Compatibility, "tensor " + t->name + " has an incompatible shape");
    }
    *p.value = t->value;
  }
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put_string(out, meta.dump());
  put_string(out, config_digest);
  put<std::uint64_t>(out, tensors.size());
  for (const auto& t : tensors) {
    put_string(out, t.name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) put<double>(out, t.value(r, c));
    }
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorKind::Parse, "not a checkpoint file");
  }
  Reader in(bytes);
  for (std::size_t k = 0; k < sizeof(kMagic); ++k) in.get<char>();
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) fail(ErrorKind::Compatibility, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  try {
    ckpt.meta = nlohmann::json::parse(in.get_string());
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Parse, std::string("checkpoint metadata: ") + e.what());
  }
  ckpt.config_digest = in.get_string();
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    Tensor t;
    t.name = in.get_string();
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    in.need(rows * cols * sizeof(double));
    t.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) t.value(r, c) = in.get<double>();
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (!in.at_end()) fail(ErrorKind::Parse, "trailing bytes after checkpoint tensors");
  return ckpt;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Internal, "cannot write checkpoint " + path);
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Parse, "cannot open checkpoint " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize(buffer.str());
}

}  // namespace gridattack::nn
