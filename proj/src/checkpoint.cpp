#include "hotspot/checkpoint.hpp"

#include "hotspot/image_io.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

namespace hotspot {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(const char* p, std::size_t n) { out_.append(p, n); }
  void tensor(const std::string& name, const Tensorf& t) {
    put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (Index e : t.shape()) put<std::uint64_t>(static_cast<std::uint64_t>(e));
    bytes(reinterpret_cast<const char*>(t.raw()), static_cast<std::size_t>(t.size()) * sizeof(float));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& in, const std::string& source) : in_(in), source_(source) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  /// Reads a tensor and checks it against the expected name and shape.
  Tensorf tensor(const std::string& expected_name, const Shape& expected_shape) {
    const auto len = get<std::uint32_t>();
    if (len > 4096) fail("implausible tensor name length");
    const std::string name = str(len);
    if (name != expected_name) fail("expected tensor '" + expected_name + "', found '" + name + "'");
    const auto rank = get<std::uint32_t>();
    if (rank > 8) fail("implausible rank for " + name);
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<Index>(get<std::uint64_t>()));
    if (shape != expected_shape)
      fail("tensor " + name + " has shape " + shape_string(shape) + ", model expects " + shape_string(expected_shape));
    Tensorf t(shape);
    const std::size_t n = static_cast<std::size_t>(t.size()) * sizeof(float);
    need(n);
    std::memcpy(t.raw(), in_.data() + pos_, n);
    pos_ += n;
    return t;
  }
  bool at_end() const { return pos_ == in_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error(source_ + ": bad checkpoint: " + what);
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) fail("truncated");
  }
  const std::string& in_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Model<float>& model, const AdamState* adam) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  const ModelConfig& c = model.config;
  w.put<std::int64_t>(c.backbone.input_h);
  w.put<std::int64_t>(c.backbone.input_w);
  for (Index v : c.backbone.widths) w.put<std::int64_t>(v);
  for (Index v : c.backbone.strides) w.put<std::int64_t>(v);
  w.put<std::int64_t>(c.backbone.se_reduction);
  w.put<std::int64_t>(c.aggregation_channels);
  w.put<std::int64_t>(c.unified_h);
  w.put<std::int64_t>(c.unified_w);
  w.put<std::int32_t>(c.num_classes);
  for (double r : c.ranges.upper) w.put<double>(r);

  std::vector<std::pair<std::string, const Tensorf*>> params;
  for_each_parameter(model, [&](const std::string& name, const GradPair<float>& p) { params.emplace_back(name, &p.value); });
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) w.tensor(name, *t);

  w.put<std::uint8_t>(adam ? 1 : 0);
  if (adam) {
    if (adam->m.size() != params.size() || adam->v.size() != params.size())
      throw std::invalid_argument("encode_checkpoint: optimizer state does not match the model");
    w.put<std::uint64_t>(adam->step);
    for (std::size_t i = 0; i < params.size(); ++i) w.tensor("adam.m." + params[i].first, adam->m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) w.tensor("adam.v." + params[i].first, adam->v[i]);
  }
  return w.take();
}

LoadedCheckpoint decode_checkpoint(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  if (r.str(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic)) r.fail("bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  ModelConfig c;
  c.backbone.input_h = r.get<std::int64_t>();
  c.backbone.input_w = r.get<std::int64_t>();
  for (Index& v : c.backbone.widths) v = r.get<std::int64_t>();
  for (Index& v : c.backbone.strides) v = r.get<std::int64_t>();
  c.backbone.se_reduction = r.get<std::int64_t>();
  c.aggregation_channels = r.get<std::int64_t>();
  c.unified_h = r.get<std::int64_t>();
  c.unified_w = r.get<std::int64_t>();
  c.num_classes = r.get<std::int32_t>();
  for (double& v : c.ranges.upper) v = r.get<double>();
  try {
    c.validate();
  } catch (const std::exception& e) {
    r.fail(std::string("invalid config: ") + e.what());
  }

  LoadedCheckpoint out;
  out.model = build_model<float>(c, 0);
  std::vector<std::pair<std::string, GradPair<float>*>> params;
  for_each_parameter(out.model, [&](const std::string& name, GradPair<float>& p) { params.emplace_back(name, &p); });
  const auto count = r.get<std::uint32_t>();
  if (count != params.size()) r.fail("tensor count " + std::to_string(count) + ", model has " + std::to_string(params.size()));
  for (auto& [name, p] : params) p->value = r.tensor(name, p->value.shape());

  const auto has_adam = r.get<std::uint8_t>();
  if (has_adam > 1) r.fail("bad optimizer flag");
  if (has_adam) {
    AdamState s;
    s.step = r.get<std::uint64_t>();
    for (auto& [name, p] : params) s.m.push_back(r.tensor("adam.m." + name, p->value.shape()));
    for (auto& [name, p] : params) s.v.push_back(r.tensor("adam.v." + name, p->value.shape()));
    out.adam = std::move(s);
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const AdamState* adam) {
  write_file(path, encode_checkpoint(model, adam));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace hotspot
