#include "hcmarl/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace hcmarl {
namespace {

constexpr char kMagic[8] = {'H', 'C', 'M', 'A', 'R', 'L', 'C', 'K'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out_.append(b, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void matrix(const Matrix& m) {
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) pod<double>(m.data()[i]);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix matrix() {
    const auto r = pod<std::uint64_t>();
    const auto c = pod<std::uint64_t>();
    if (r > (1u << 24) || c > (1u << 24)) fail("implausible matrix shape");
    need(r * c * sizeof(double));
    Matrix m(static_cast<Index>(r), static_cast<Index>(c));
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = pod<double>();
    return m;
  }
  void finish() const {
    if (pos_ != data_.size()) fail("trailing bytes");
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw IntegrityError("checkpoint section '" + what_ + "': " + msg);
  }

 private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) fail("unexpected end of data");
  }
  const std::string& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

using Sections = std::map<std::string, std::string>;

std::string encode_params(const ParameterSet& p) {
  Writer w;
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.size()));
  for (const auto& [name, t] : p) {
    w.str(name);
    w.matrix(t.value());
  }
  return w.take();
}

std::string encode_adam(const AdamState& a) {
  Writer w;
  w.pod(a.lr);
  w.pod(a.beta1);
  w.pod(a.beta2);
  w.pod(a.eps);
  w.pod<std::int64_t>(a.step);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(a.moments.size()));
  for (const auto& [name, m] : a.moments) {
    w.str(name);
    w.matrix(m.first);
    w.matrix(m.second);
  }
  return w.take();
}

std::string encode_matrix(const Matrix& m) {
  Writer w;
  w.matrix(m);
  return w.take();
}

std::string encode_string(const std::string& s) {
  Writer w;
  w.str(s);
  return w.take();
}

const std::string& section(const Sections& s, const std::string& name) {
  auto it = s.find(name);
  if (it == s.end()) throw IntegrityError("checkpoint is missing section '" + name + "'");
  return it->second;
}

void decode_params(const Sections& s, const std::string& name, ParameterSet& into) {
  Reader r(section(s, name), name);
  const auto n = r.pod<std::uint32_t>();
  if (n != into.size()) r.fail("parameter count does not match the config");
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string pname = r.str();
    Matrix m = r.matrix();
    if (!into.contains(pname)) r.fail("unexpected parameter '" + pname + "'");
    Tensor& t = into.at(pname);
    if (t.value().rows() != m.rows() || t.value().cols() != m.cols())
      r.fail("shape of '" + pname + "' does not match the config");
    t.mutable_value() = std::move(m);
  }
  r.finish();
}

void decode_adam(const Sections& s, const std::string& name, AdamState& a) {
  Reader r(section(s, name), name);
  a.lr = r.pod<double>();
  a.beta1 = r.pod<double>();
  a.beta2 = r.pod<double>();
  a.eps = r.pod<double>();
  a.step = r.pod<std::int64_t>();
  const auto n = r.pod<std::uint32_t>();
  a.moments.clear();
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string pname = r.str();
    AdamMoments m;
    m.first = r.matrix();
    m.second = r.matrix();
    a.moments.emplace(pname, std::move(m));
  }
  r.finish();
}

Matrix decode_matrix(const Sections& s, const std::string& name) {
  Reader r(section(s, name), name);
  Matrix m = r.matrix();
  r.finish();
  return m;
}

std::string decode_string(const Sections& s, const std::string& name) {
  Reader r(section(s, name), name);
  std::string v = r.str();
  r.finish();
  return v;
}

const char* kStreamNames[] = {"rng.act", "rng.consensus", "rng.env", "rng.update"};

Rng* stream(TrainerStreams& s, int i) {
  Rng* all[] = {&s.act, &s.consensus, &s.env, &s.update};
  return all[i];
}

}  // namespace

std::string encode_checkpoint(const Trainer& tr, const RunConfig& config, std::uint64_t seed) {
  Sections s;
  s["config"] = encode_string(config_echo(config));
  {
    Writer w;
    w.pod<std::uint64_t>(seed);
    w.pod<std::int32_t>(tr.iteration);
    w.pod<std::int64_t>(tr.env_steps);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(tr.policy.nets.size()));
    for (const auto& net : tr.policy.nets) w.pod<std::int32_t>(net.version);
    s["meta"] = w.take();
  }
  for (std::size_t i = 0; i < tr.policy.nets.size(); ++i) {
    const std::string p = "actor." + std::to_string(i);
    s[p + ".params"] = encode_params(tr.policy.nets[i].params);
    s[p + ".adam"] = encode_adam(tr.policy.nets[i].optimizer);
  }
  s["critic.params"] = encode_params(tr.critic.params);
  s["critic.target"] = encode_params(tr.critic.target);
  s["critic.adam"] = encode_adam(tr.critic.optimizer);
  for (std::size_t m = 0; m < tr.layers.size(); ++m) {
    const std::string p = "layer." + std::to_string(m);
    s[p + ".student"] = encode_params(tr.layers[m].head.student);
    s[p + ".teacher"] = encode_params(tr.layers[m].head.teacher);
    s[p + ".center"] = encode_matrix(tr.layers[m].head.center);
    s[p + ".adam"] = encode_adam(tr.layers[m].optimizer);
  }
  s["aggregator.params"] = encode_params(tr.aggregator.params);
  s["aggregator.adam"] = encode_adam(tr.aggregator.optimizer);
  TrainerStreams streams = tr.streams;
  for (int i = 0; i < 4; ++i) s[kStreamNames[i]] = encode_string(stream(streams, i)->state());

  Writer w;
  std::string head(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
  for (const auto& [name, payload] : s) {
    w.str(name);
    w.pod<std::uint64_t>(payload.size());
  }
  std::string body = w.take();
  // Table of contents first, payloads after, both in name order.
  for (const auto& [name, payload] : s) body += payload;
  std::string out = head + body;
  Writer tail;
  tail.pod<std::uint64_t>(fnv1a(out.data(), out.size()));
  return out + tail.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  constexpr std::size_t kMin = sizeof kMagic + 8 + 8;
  if (bytes.size() < kMin) throw IntegrityError("checkpoint is truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw IntegrityError("not a checkpoint file (bad magic)");
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  const std::string body = bytes.substr(sizeof kMagic, bytes.size() - 8 - sizeof kMagic);
  Reader r(body, "header");
  const auto version = r.pod<std::uint32_t>();
  if (fnv1a(bytes.data(), bytes.size() - 8) != stored)
    throw IntegrityError("checkpoint checksum mismatch (truncated or corrupted)");
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint format version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(kCheckpointVersion) +
                       ")");
  const auto count = r.pod<std::uint32_t>();
  std::vector<std::pair<std::string, std::uint64_t>> toc;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    toc.emplace_back(std::move(name), r.pod<std::uint64_t>());
  }
  Sections s;
  for (const auto& [name, size] : toc) {
    if (!s.emplace(name, r.bytes(size)).second)
      throw IntegrityError("duplicate checkpoint section '" + name + "'");
  }
  r.finish();

  Checkpoint ck;
  try {
    ck.config = parse_config(decode_string(s, "config"));
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint config echo is invalid: ") + e.what());
  }
  Reader meta(section(s, "meta"), "meta");
  ck.seed = meta.pod<std::uint64_t>();
  const auto iteration = meta.pod<std::int32_t>();
  const auto env_steps = meta.pod<std::int64_t>();
  const auto nets = meta.pod<std::uint32_t>();
  std::vector<int> versions(nets);
  for (auto& v : versions) v = meta.pod<std::int32_t>();
  meta.finish();

  ck.trainer = std::make_unique<Trainer>(ck.config.env, ck.config.train, ck.config.hierarchy,
                                         ck.seed);
  Trainer& tr = *ck.trainer;
  if (nets != tr.policy.nets.size()) throw IntegrityError("actor count does not match config");
  tr.iteration = iteration;
  tr.env_steps = env_steps;
  for (std::size_t i = 0; i < tr.policy.nets.size(); ++i) {
    const std::string p = "actor." + std::to_string(i);
    decode_params(s, p + ".params", tr.policy.nets[i].params);
    decode_adam(s, p + ".adam", tr.policy.nets[i].optimizer);
    tr.policy.nets[i].version = versions[i];
  }
  decode_params(s, "critic.params", tr.critic.params);
  decode_params(s, "critic.target", tr.critic.target);
  decode_adam(s, "critic.adam", tr.critic.optimizer);
  for (std::size_t m = 0; m < tr.layers.size(); ++m) {
    const std::string p = "layer." + std::to_string(m);
    decode_params(s, p + ".student", tr.layers[m].head.student);
    decode_params(s, p + ".teacher", tr.layers[m].head.teacher);
    Matrix c = decode_matrix(s, p + ".center");
    if (c.rows() != 1 || c.cols() != tr.layers[m].head.center.cols())
      throw IntegrityError("center of layer " + std::to_string(m) + " has the wrong size");
    tr.layers[m].head.center = c;
    decode_adam(s, p + ".adam", tr.layers[m].optimizer);
  }
  decode_params(s, "aggregator.params", tr.aggregator.params);
  decode_adam(s, "aggregator.adam", tr.aggregator.optimizer);
  for (int i = 0; i < 4; ++i) {
    try {
      stream(tr.streams, i)->set_state(decode_string(s, kStreamNames[i]));
    } catch (const std::invalid_argument& e) {
      throw IntegrityError(std::string("bad rng state: ") + e.what());
    }
  }
  // Every section must have been one we know about.
  std::size_t expected = 2 + 2 * tr.policy.nets.size() + 3 + 4 * tr.layers.size() + 2 + 4;
  if (s.size() != expected) throw IntegrityError("checkpoint has unexpected sections");
  return ck;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to '" + tmp + "'");
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const std::string& path, const Trainer& trainer, const RunConfig& config,
                     std::uint64_t seed) {
  write_file_atomic(path, encode_checkpoint(trainer, config, seed));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

bool checkpoint_roundtrips(const std::string& path) {
  const std::string bytes = read_file(path);
  Checkpoint ck = decode_checkpoint(bytes);
  return encode_checkpoint(*ck.trainer, ck.config, ck.seed) == bytes;
}

}  // namespace hcmarl
