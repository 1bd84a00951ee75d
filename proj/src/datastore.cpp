#include "vssf/datastore.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include <unistd.h>

#include "vssf/error.hpp"

namespace vssf {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr char kMagic[4] = {'V', 'S', 'S', 'F'};

template <typename T>
void append_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(const std::string& in, std::size_t offset) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

struct ArraySpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::string dtype;
  std::size_t offset = 0;

  std::size_t count() const {
    std::size_t c = 1;
    for (std::size_t s : shape) c *= s;
    return c;
  }
  std::size_t element_size() const { return dtype == "float64" ? 8 : 4; }
  std::size_t bytes() const { return count() * element_size(); }
};

/// Accumulates arrays, then frames header + payload.
class ContainerWriter {
 public:
  void add_f32(const std::string& name, std::vector<std::size_t> shape, const std::vector<float>& data) {
    add_spec(name, std::move(shape), "float32");
    for (float v : data) append_le(payload_, v);
  }
  void add_f64(const std::string& name, const Eigen::MatrixXd& m) {
    add_spec(name, {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, "float64");
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) append_le(payload_, m(i, j));
    }
  }

  std::string finish(json header) const {
    header["arrays"] = arrays_;
    const std::string text = header.dump();
    std::string out(kMagic, 4);
    append_le(out, kFormatVersion);
    append_le(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    out += payload_;
    return out;
  }

 private:
  void add_spec(const std::string& name, std::vector<std::size_t> shape, const std::string& dtype) {
    arrays_.push_back({{"name", name}, {"shape", shape}, {"dtype", dtype}, {"offset", payload_.size()}});
  }

  json arrays_ = json::array();
  std::string payload_;
};

void write_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (f == nullptr) throw Error(ErrorKind::kIoError, "cannot open " + tmp.string() + " for writing");
  const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size() && std::fflush(f) == 0 &&
                  ::fsync(fileno(f)) == 0;
  if (std::fclose(f) != 0 || !ok) {
    std::remove(tmp.c_str());
    throw Error(ErrorKind::kIoError, "failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::kIoError, "cannot rename into " + path.string() + ": " + ec.message());
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::kIoError, "read failed for " + path.string());
  return bytes;
}

/// Parsed and validated container: header plus array specs that exactly tile the payload.
struct Container {
  json header;
  std::vector<ArraySpec> arrays;
  std::string bytes;
  std::size_t payload_start = 0;

  const ArraySpec& spec(const std::string& name) const {
    for (const ArraySpec& a : arrays) {
      if (a.name == name) return a;
    }
    throw Error(ErrorKind::kCorruptHeader, "missing array '" + name + "'");
  }

  std::vector<float> f32(const ArraySpec& a) const {
    require(a.dtype == "float32", ErrorKind::kCorruptHeader, "array '" + a.name + "' is not float32");
    std::vector<float> out(a.count());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = read_le<float>(bytes, payload_start + a.offset + 4 * k);
    return out;
  }

  Eigen::MatrixXd f64(const ArraySpec& a) const {
    require(a.dtype == "float64" && a.shape.size() == 2, ErrorKind::kCorruptHeader,
            "array '" + a.name + "' is not a float64 matrix");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(a.shape[0]), static_cast<Eigen::Index>(a.shape[1]));
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = read_le<double>(bytes, payload_start + a.offset + 8 * k++);
    }
    return m;
  }
};

Container parse_container(const fs::path& path) {
  Container c;
  c.bytes = read_all(path);
  const std::string& b = c.bytes;
  require(b.size() >= 4 && std::memcmp(b.data(), kMagic, 4) == 0, ErrorKind::kBadMagic,
          path.string() + " is not a VSSF container");
  require(b.size() >= 10, ErrorKind::kCorruptHeader, "file too short for framing");
  const auto version = read_le<std::uint16_t>(b, 4);
  require(version == kFormatVersion, ErrorKind::kUnsupportedVersion, "format version " + std::to_string(version));
  const auto header_len = read_le<std::uint32_t>(b, 6);
  require(b.size() >= 10 + static_cast<std::size_t>(header_len), ErrorKind::kCorruptHeader,
          "header extends past end of file");
  c.payload_start = 10 + header_len;
  try {
    c.header = json::parse(b.substr(10, header_len));
    std::size_t expected_offset = 0;
    for (const json& a : c.header.at("arrays")) {
      ArraySpec spec;
      spec.name = a.at("name").get<std::string>();
      spec.shape = a.at("shape").get<std::vector<std::size_t>>();
      spec.dtype = a.at("dtype").get<std::string>();
      spec.offset = a.at("offset").get<std::size_t>();
      require(spec.dtype == "float32" || spec.dtype == "float64", ErrorKind::kCorruptHeader,
              "unknown dtype " + spec.dtype);
      require(spec.offset == expected_offset, ErrorKind::kCorruptHeader, "array offsets do not tile the payload");
      expected_offset += spec.bytes();
      c.arrays.push_back(std::move(spec));
    }
    require(expected_offset == b.size() - c.payload_start, ErrorKind::kCorruptHeader,
            "payload length does not match the declared arrays");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorruptHeader, std::string("header: ") + e.what());
  }
  return c;
}

Array3 load_array3(const Container& c, const std::string& name) {
  const ArraySpec& spec = c.spec(name);
  require(spec.shape.size() == 3, ErrorKind::kShapeMismatch, "array '" + name + "' must be 3-D");
  Array3 a;
  a.n = spec.shape[0];
  a.steps = spec.shape[1];
  a.width = spec.shape[2];
  a.data = c.f32(spec);
  return a;
}

json model_structure(const Model& m) {
  json sensors = json::array();
  for (const SensorModel& s : m.sensors) {
    if (s.is_linear()) {
      sensors.push_back({{"name", s.name}, {"kind", "linear"}, {"trainable", s.linear().trainable}});
    } else {
      const NonlinearSensor& nl = s.nonlinear();
      sensors.push_back({{"name", s.name},
                         {"kind", "nonlinear"},
                         {"epsilon", nl.epsilon},
                         {"encoder_layers", nl.encoder.weights.size()},
                         {"decoder_layers", nl.decoder.weights.size()},
                         {"activation", nl.encoder.activation == nn::Activation::kTanh ? "tanh" : "gelu"}});
    }
  }
  return {{"state_dim", m.state_dim()},
          {"input_dim", m.input_dim()},
          {"learn_dynamics", m.learn_dynamics},
          {"sensors", sensors}};
}

Model model_skeleton(const json& j) {
  Model m;
  m.learn_dynamics = j.at("learn_dynamics").get<bool>();
  for (const json& s : j.at("sensors")) {
    SensorModel sm;
    sm.name = s.at("name").get<std::string>();
    const std::string kind = s.at("kind").get<std::string>();
    if (kind == "linear") {
      LinearSensor lin;
      lin.trainable = s.at("trainable").get<bool>();
      sm.model = lin;
    } else if (kind == "nonlinear") {
      NonlinearSensor nl;
      nl.epsilon = s.at("epsilon").get<double>();
      const auto activation = s.at("activation").get<std::string>() == "tanh" ? nn::Activation::kTanh : nn::Activation::kGelu;
      nl.encoder.activation = nl.decoder.activation = activation;
      nl.encoder.weights.resize(s.at("encoder_layers").get<std::size_t>());
      nl.encoder.biases.resize(nl.encoder.weights.size());
      nl.decoder.weights.resize(s.at("decoder_layers").get<std::size_t>());
      nl.decoder.biases.resize(nl.decoder.weights.size());
      sm.model = std::move(nl);
    } else {
      throw Error(ErrorKind::kCorruptHeader, "unknown sensor kind '" + kind + "'");
    }
    m.sensors.push_back(std::move(sm));
  }
  return m;
}

}  // namespace

void write_dataset(const Dataset& d, const fs::path& path) {
  validate(d);
  ContainerWriter w;
  w.add_f32("states", {d.states.n, d.states.steps, d.states.width}, d.states.data);
  w.add_f32("inputs", {d.inputs.n, d.inputs.steps, d.inputs.width}, d.inputs.data);
  for (const auto& [name, obs] : d.observations) w.add_f32("obs/" + name, {obs.n, obs.steps, obs.width}, obs.data);
  json header = {{"kind", "dataset"}, {"environment", d.environment}, {"seed", d.seed}};
  write_atomic(path, w.finish(std::move(header)));
}

Dataset read_dataset(const fs::path& path) {
  const Container c = parse_container(path);
  Dataset d;
  try {
    require(c.header.at("kind") == "dataset", ErrorKind::kCorruptHeader, "not a dataset file");
    d.environment = c.header.at("environment");
    d.seed = c.header.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorruptHeader, std::string("dataset header: ") + e.what());
  }
  d.states = load_array3(c, "states");
  d.inputs = load_array3(c, "inputs");
  for (const ArraySpec& a : c.arrays) {
    if (a.name.rfind("obs/", 0) == 0) d.observations[a.name.substr(4)] = load_array3(c, a.name);
  }
  validate(d);
  return d;
}

void write_checkpoint(const Checkpoint& c, const fs::path& path) {
  Model model = c.model;
  ContainerWriter w;
  const std::vector<ParamRef> params = parameters(model);
  for (const ParamRef& p : params) w.add_f64(p.name, *p.value);
  json header = {{"kind", "checkpoint"}, {"model", model_structure(model)}, {"step", c.step}, {"config", c.config}};
  if (c.optimizer) {
    require(c.optimizer->first.size() == params.size() && c.optimizer->second.size() == params.size(),
            ErrorKind::kConfigMismatch, "optimizer state does not match the model");
    for (std::size_t k = 0; k < params.size(); ++k) w.add_f64("adam/m/" + params[k].name, c.optimizer->first[k]);
    for (std::size_t k = 0; k < params.size(); ++k) w.add_f64("adam/v/" + params[k].name, c.optimizer->second[k]);
    header["adam_step"] = c.optimizer->step;
  }
  write_atomic(path, w.finish(std::move(header)));
}

Checkpoint read_checkpoint(const fs::path& path) {
  const Container c = parse_container(path);
  Checkpoint out;
  json structure;
  try {
    require(c.header.at("kind") == "checkpoint", ErrorKind::kCorruptHeader, "not a checkpoint file");
    structure = c.header.at("model");
    out.step = c.header.at("step").get<std::uint64_t>();
    out.config = c.header.at("config");
    out.model = model_skeleton(structure);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorruptHeader, std::string("checkpoint header: ") + e.what());
  }
  std::vector<ParamRef> params = parameters(out.model);
  for (ParamRef& p : params) *p.value = c.f64(c.spec(p.name));

  const auto m = structure.at("state_dim").get<Eigen::Index>();
  const auto d = structure.at("input_dim").get<Eigen::Index>();
  require(out.model.a.rows() == m && out.model.b.cols() == d, ErrorKind::kConfigMismatch,
          "stored arrays disagree with the declared state/input dimensions");
  try {
    out.model = make_model(out.model.dynamics(), std::move(out.model.sensors), out.model.learn_dynamics);
    // make_model re-derives the factor; keep the stored one bit-exactly.
    *parameters(out.model)[2].value = c.f64(c.spec("dynamics/sigma_w_chol"));
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfigMismatch, std::string("inconsistent checkpoint: ") + e.what());
  }

  if (c.header.contains("adam_step")) {
    AdamState state;
    state.step = c.header.at("adam_step").get<std::uint64_t>();
    for (const ParamRef& p : params) state.first.push_back(c.f64(c.spec("adam/m/" + p.name)));
    for (const ParamRef& p : params) state.second.push_back(c.f64(c.spec("adam/v/" + p.name)));
    out.optimizer = std::move(state);
  }
  return out;
}

json read_header(const fs::path& path) { return parse_container(path).header; }

}  // namespace vssf
