#include "ultranerf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ultranerf/error.hpp"

namespace unerf::train {

using nlohmann::json;

std::string to_string(ModelVariant v) { return v == ModelVariant::ultra ? "ultra" : "baseline"; }

ModelVariant variant_from_string(const std::string& s) {
  if (s == "ultra") return ModelVariant::ultra;
  if (s == "baseline" || s == "no-render-baseline") return ModelVariant::baseline;
  throw ConfigError("unknown model variant '" + s + "' (ultra|baseline)");
}

inr::MlpConfig ModelConfig::mlp() const {
  inr::MlpConfig m;
  m.hidden_layers = hidden_layers;
  m.width = width;
  m.skip_layer = skip_layer;
  m.input_dim = encoding.encoded_dim(3);
  m.output_dim = variant == ModelVariant::ultra ? 5 : 1;
  return m;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
  if (frames_per_batch < 1) throw ConfigError("frames per batch must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (lr_halving_interval < 1) throw ConfigError("learning-rate halving interval must be positive");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint interval must be non-negative");
  model.encoding.validate();
  model.mlp().validate();
  loss.validate();
  render.validate();
}

namespace {

constexpr const char* kMagic = "UNRF1\n";

json render_to_json(const render::RenderConfig& r) {
  return {{"frequency", r.frequency},
          {"axial_step", r.axial_step},
          {"initial_intensity", r.initial_intensity},
          {"psf", {{"rows", r.psf.rows}, {"cols", r.psf.cols}, {"weights", r.psf.weights}}},
          {"mode", render::to_string(r.mode)},
          {"temperature", r.temperature},
          {"scatter_noise", r.scatter_noise},
          {"seed", r.seed}};
}

render::RenderConfig render_from_json(const json& j) {
  render::RenderConfig r;
  r.frequency = j.at("frequency").get<double>();
  r.axial_step = j.at("axial_step").get<double>();
  r.initial_intensity = j.at("initial_intensity").get<double>();
  r.psf.rows = j.at("psf").at("rows").get<std::size_t>();
  r.psf.cols = j.at("psf").at("cols").get<std::size_t>();
  r.psf.weights = j.at("psf").at("weights").get<std::vector<double>>();
  r.mode = render::sampling_mode_from_string(j.at("mode").get<std::string>());
  r.temperature = j.at("temperature").get<double>();
  r.scatter_noise = j.at("scatter_noise").get<bool>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

json model_to_json(const ModelConfig& m) {
  return {{"variant", to_string(m.variant)},
          {"frequencies", m.encoding.frequencies},
          {"include_input", m.encoding.include_input},
          {"hidden_layers", m.hidden_layers},
          {"width", m.width},
          {"skip_layer", m.skip_layer}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.variant = variant_from_string(j.at("variant").get<std::string>());
  m.encoding.frequencies = j.at("frequencies").get<int>();
  m.encoding.include_input = j.at("include_input").get<bool>();
  m.hidden_layers = j.at("hidden_layers").get<int>();
  m.width = j.at("width").get<int>();
  m.skip_layer = j.at("skip_layer").get<int>();
  return m;
}

json train_to_json(const TrainConfig& t) {
  return {{"model", model_to_json(t.model)},
          {"iterations", t.iterations},
          {"frames_per_batch", t.frames_per_batch},
          {"learning_rate", t.learning_rate},
          {"lr_halving_interval", t.lr_halving_interval},
          {"adam", {t.adam_beta1, t.adam_beta2, t.adam_epsilon}},
          {"lambda", t.loss.lambda},
          {"ssim", {{"window", t.loss.ssim.window}, {"sigma", t.loss.ssim.sigma}, {"c1", t.loss.ssim.c1}, {"c2", t.loss.ssim.c2}}},
          {"seed", t.seed},
          {"render", render_to_json(t.render)},
          {"checkpoint_interval", t.checkpoint_interval}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.model = model_from_json(j.at("model"));
  t.iterations = j.at("iterations").get<int>();
  t.frames_per_batch = j.at("frames_per_batch").get<int>();
  t.learning_rate = j.at("learning_rate").get<double>();
  t.lr_halving_interval = j.at("lr_halving_interval").get<int>();
  const auto adam = j.at("adam").get<std::vector<double>>();
  if (adam.size() != 3) throw DataError("adam settings must hold three values");
  t.adam_beta1 = adam[0];
  t.adam_beta2 = adam[1];
  t.adam_epsilon = adam[2];
  t.loss.lambda = j.at("lambda").get<double>();
  const auto& s = j.at("ssim");
  t.loss.ssim = {s.at("window").get<int>(), s.at("sigma").get<double>(), s.at("c1").get<double>(), s.at("c2").get<double>()};
  t.seed = j.at("seed").get<std::uint64_t>();
  t.render = render_from_json(j.at("render"));
  t.checkpoint_interval = j.at("checkpoint_interval").get<int>();
  return t;
}

void append_le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

float read_le(const std::string& in, std::size_t pos) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(b)])) << (8 * b);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::string Checkpoint::serialize() const {
  json h;
  h["format_version"] = format_version;
  h["variant"] = to_string(variant);
  h["encoding"] = {{"frequencies", encoding.frequencies}, {"include_input", encoding.include_input}};
  const auto& m = weights.config;
  h["mlp"] = {{"hidden_layers", m.hidden_layers}, {"width", m.width}, {"skip_layer", m.skip_layer},
              {"input_dim", m.input_dim}, {"output_dim", m.output_dim}};
  h["layers"] = json::array();
  for (const auto& l : weights.layers) h["layers"].push_back({l.rows, l.cols});
  h["bounds"] = {{"min", {bounds.min.x(), bounds.min.y(), bounds.min.z()}},
                 {"max", {bounds.max.x(), bounds.max.y(), bounds.max.z()}}};
  h["frame"] = {{"width", frame.width}, {"depth", frame.depth}, {"lateral_spacing_mm", frame.lateral_spacing},
                {"axial_spacing_mm", frame.axial_spacing}};
  h["train"] = train_to_json(train);
  h["iteration"] = iteration;
  const std::string header = h.dump();
  std::string out = kMagic;
  out += std::to_string(header.size()) + "\n";
  out += header;
  for (const auto& l : weights.layers) {
    for (float v : l.weight) append_le(out, v);
    for (float v : l.bias) append_le(out, v);
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes, const std::string& origin) {
  const std::string magic = kMagic;
  if (bytes.compare(0, magic.size(), magic) != 0) throw DataError(origin + ": not a checkpoint (missing UNRF1 magic)");
  const auto nl = bytes.find('\n', magic.size());
  if (nl == std::string::npos) throw DataError(origin + ": truncated checkpoint header");
  std::size_t header_len = 0;
  try {
    header_len = std::stoul(bytes.substr(magic.size(), nl - magic.size()));
  } catch (const std::exception&) {
    throw DataError(origin + ": malformed checkpoint header length");
  }
  if (nl + 1 + header_len > bytes.size()) throw DataError(origin + ": truncated checkpoint header");
  Checkpoint c;
  std::size_t pos = nl + 1 + header_len;
  try {
    const json h = json::parse(bytes.substr(nl + 1, header_len));
    c.format_version = h.at("format_version").get<int>();
    if (c.format_version != kFormatVersion)
      throw DataError(origin + ": unsupported checkpoint version " + std::to_string(c.format_version));
    c.variant = variant_from_string(h.at("variant").get<std::string>());
    c.encoding.frequencies = h.at("encoding").at("frequencies").get<int>();
    c.encoding.include_input = h.at("encoding").at("include_input").get<bool>();
    const auto& m = h.at("mlp");
    c.weights.config = {m.at("hidden_layers").get<int>(), m.at("width").get<int>(), m.at("skip_layer").get<int>(),
                        m.at("input_dim").get<int>(), m.at("output_dim").get<int>()};
    for (const auto& l : h.at("layers")) {
      inr::LayerWeights lw;
      lw.rows = l.at(0).get<std::size_t>();
      lw.cols = l.at(1).get<std::size_t>();
      const std::size_t need = 4 * (lw.rows * lw.cols + lw.cols);
      if (pos + need > bytes.size()) throw DataError(origin + ": truncated weight data");
      lw.weight.resize(lw.rows * lw.cols);
      for (auto& v : lw.weight) {
        v = read_le(bytes, pos);
        pos += 4;
      }
      lw.bias.resize(lw.cols);
      for (auto& v : lw.bias) {
        v = read_le(bytes, pos);
        pos += 4;
      }
      c.weights.layers.push_back(std::move(lw));
    }
    const auto& b = h.at("bounds");
    for (int a = 0; a < 3; ++a) {
      c.bounds.min[a] = b.at("min").at(static_cast<std::size_t>(a)).get<double>();
      c.bounds.max[a] = b.at("max").at(static_cast<std::size_t>(a)).get<double>();
    }
    const auto& f = h.at("frame");
    c.frame = {f.at("width").get<int>(), f.at("depth").get<int>(), f.at("lateral_spacing_mm").get<double>(),
               f.at("axial_spacing_mm").get<double>()};
    c.train = train_from_json(h.at("train"));
    c.iteration = h.at("iteration").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw DataError(origin + ": malformed checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(origin + ": " + e.what());
  }
  if (pos != bytes.size()) throw DataError(origin + ": trailing bytes after weight data");
  if (c.weights.layers.size() != static_cast<std::size_t>(c.weights.config.hidden_layers + 1))
    throw DataError(origin + ": layer count does not match the network configuration");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write checkpoint");
  const auto bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(path.string() + ": write failed");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open checkpoint");
  std::ostringstream os;
  os << in.rdbuf();
  return deserialize(os.str(), path.string());
}

}  // namespace unerf::train
