#include "ctp/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace ctp {

bool Checkpoint::operator==(const Checkpoint& o) const {
  return version == o.version && step == o.step && config_text == o.config_text && params == o.params &&
         optimizer == o.optimizer && running_mean == o.running_mean && discriminator == o.discriminator &&
         disc_optimizer == o.disc_optimizer;
}

namespace {

constexpr char kMagic[4] = {'C', 'T', 'P', 'C'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
  void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  void bytes(const std::string& s) { out_ += s; }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw IntegrityError("checkpoint is truncated at byte " + std::to_string(pos_));
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

struct Entry {
  std::string name;
  Shape shape;
  const Matrix<float>* values = nullptr;
};

void add_store(std::vector<Entry>& out, const std::string& prefix, const ParameterStore<float>& store) {
  for (const auto& [name, array] : store.entries()) out.push_back({prefix + name, array.shape, &array.values});
}

void add_moments(std::vector<Entry>& out, const std::string& prefix, const ParameterStore<float>& store,
                 const std::map<std::string, Matrix<float>>& moments) {
  for (const auto& [name, m] : moments) out.push_back({prefix + name, store.get(name).shape, &m});
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  const TrainConfig cfg = c.config();
  Matrix<float> rm = c.running_mean.cast<float>();
  if (rm.cast<double>() != c.running_mean) throw ContractError("checkpoint: running mean is not float representable");

  std::vector<Entry> entries;
  add_store(entries, "p/", c.params);
  add_moments(entries, "m/", c.params, c.optimizer.first_moment);
  add_moments(entries, "v/", c.params, c.optimizer.second_moment);
  add_store(entries, "d/", c.discriminator);
  add_moments(entries, "dm/", c.discriminator, c.disc_optimizer.first_moment);
  add_moments(entries, "dv/", c.discriminator, c.disc_optimizer.second_moment);
  if (rm.size()) entries.push_back({"running_mean", {rm.rows(), rm.cols()}, &rm});

  Writer w;
  w.bytes(std::string(kMagic, 4));
  w.put(c.version);
  w.put(static_cast<std::uint16_t>(cfg.model.family));
  w.put(config_digest(cfg));
  w.put(c.step);
  w.put(static_cast<std::uint64_t>(c.optimizer.step));
  w.put(static_cast<std::uint64_t>(c.disc_optimizer.step));
  w.put(static_cast<std::uint32_t>(c.config_text.size()));
  w.bytes(c.config_text);
  w.put(static_cast<std::uint32_t>(entries.size()));
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    w.put(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name);
    w.put(static_cast<std::uint8_t>(e.shape.size()));
    for (Index d : e.shape) w.put(static_cast<std::uint64_t>(d));
    w.put(offset);
    offset += static_cast<std::uint64_t>(e.values->size());
  }
  w.put(offset);
  for (const auto& e : entries) {
    for (Index i = 0; i < e.values->size(); ++i) w.put_f32(e.values->data()[i]);
  }
  w.put(fnv1a(w.str().data(), w.str().size()));
  return std::move(w.str());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint: bad magic bytes");
  }
  Reader r(bytes);
  r.skip(4);
  Checkpoint c;
  c.version = r.get<std::uint16_t>();
  if (c.version > kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(c.version) + " is newer than supported version " +
                       std::to_string(kCheckpointVersion));
  }
  if (c.version == 0) throw FormatError("checkpoint version 0 is not valid");
  const auto family = r.get<std::uint16_t>();
  const auto digest = r.get<std::uint64_t>();
  c.step = r.get<std::uint64_t>();
  c.optimizer.step = static_cast<std::int64_t>(r.get<std::uint64_t>());
  c.disc_optimizer.step = static_cast<std::int64_t>(r.get<std::uint64_t>());
  c.config_text = r.bytes(r.get<std::uint32_t>());

  struct Header {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Header> headers(r.get<std::uint32_t>());
  for (auto& h : headers) {
    h.name = r.bytes(r.get<std::uint16_t>());
    h.shape.resize(r.get<std::uint8_t>());
    for (auto& d : h.shape) d = static_cast<Index>(r.get<std::uint64_t>());
    h.offset = r.get<std::uint64_t>();
  }
  const auto count = r.get<std::uint64_t>();
  if ((bytes.size() - r.pos()) / 4 < count) throw IntegrityError("checkpoint is truncated in the payload");
  const std::size_t payload_start = r.pos();
  r.skip(static_cast<std::size_t>(count) * 4);
  const std::size_t body = r.pos();
  const auto checksum = r.get<std::uint64_t>();
  if (r.pos() != bytes.size()) throw IntegrityError("checkpoint has trailing bytes");
  if (checksum != fnv1a(bytes.data(), body)) throw IntegrityError("checkpoint checksum mismatch");

  TrainConfig cfg;
  try {
    cfg = parse_train_config(c.config_text);
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint config does not parse: ") + e.what());
  }
  if (static_cast<std::uint16_t>(cfg.model.family) != family) throw IntegrityError("checkpoint family field disagrees");
  if (config_digest(cfg) != digest) throw IntegrityError("checkpoint config digest disagrees with its config text");

  for (const auto& h : headers) {
    auto [rows, cols] = storage_dims(h.shape);
    if (h.offset + static_cast<std::uint64_t>(rows * cols) > count) {
      throw IntegrityError("checkpoint entry '" + h.name + "' runs past the payload");
    }
    Matrix<float> m(rows, cols);
    Reader at(bytes);
    at.skip(payload_start + static_cast<std::size_t>(h.offset) * 4);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = at.get_f32();

    auto strip = [&](const std::string& prefix) { return h.name.substr(prefix.size()); };
    auto starts = [&](const std::string& prefix) { return h.name.rfind(prefix, 0) == 0; };
    if (starts("p/")) c.params.add(strip("p/"), Array<float>(h.shape, std::move(m)));
    else if (starts("m/")) c.optimizer.first_moment[strip("m/")] = std::move(m);
    else if (starts("v/")) c.optimizer.second_moment[strip("v/")] = std::move(m);
    else if (starts("d/")) c.discriminator.add(strip("d/"), Array<float>(h.shape, std::move(m)));
    else if (starts("dm/")) c.disc_optimizer.first_moment[strip("dm/")] = std::move(m);
    else if (starts("dv/")) c.disc_optimizer.second_moment[strip("dv/")] = std::move(m);
    else if (h.name == "running_mean") c.running_mean = m.cast<double>();
    else throw IntegrityError("checkpoint has unknown entry '" + h.name + "'");
  }
  c.optimizer.hyper = cfg.adam;
  c.disc_optimizer.hyper = cfg.adam;
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ContractError("cannot write checkpoint '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ContractError("failed writing checkpoint '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_digest) {
  Checkpoint c = load_checkpoint(path);
  if (c.digest() != expected_digest) {
    throw ContractError("checkpoint '" + path + "' was trained with a different model configuration");
  }
  return c;
}

}  // namespace ctp
