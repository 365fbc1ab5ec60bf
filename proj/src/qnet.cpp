#include "cg2a/qnet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cg2a/errors.hpp"
#include "cg2a/rng.hpp"

namespace cg2a {

namespace {

struct LayerShape {
  Shape weight;
  Shape bias;
  std::size_t fan_in;
};

std::vector<LayerShape> layer_shapes(const QNetworkSpec& spec) {
  std::vector<LayerShape> out;
  std::size_t channels = spec.in_channels;
  for (const auto& c : spec.conv) {
    out.push_back({{c.channels, channels, c.kernel, c.kernel}, {c.channels}, channels * c.kernel * c.kernel});
    channels = c.channels;
  }
  std::size_t in = spec.conv_features();
  for (std::size_t width : spec.dense) {
    out.push_back({{width, in}, {width}, in});
    in = width;
  }
  out.push_back({{spec.actions, in}, {spec.actions}, in});
  return out;
}

std::vector<std::string> param_names(const QNetworkSpec& spec) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < spec.conv.size(); ++i) {
    names.push_back("conv" + std::to_string(i + 1) + ".weight");
    names.push_back("conv" + std::to_string(i + 1) + ".bias");
  }
  for (std::size_t i = 0; i < spec.dense.size(); ++i) {
    names.push_back("fc" + std::to_string(i + 1) + ".weight");
    names.push_back("fc" + std::to_string(i + 1) + ".bias");
  }
  names.push_back("head.weight");
  names.push_back("head.bias");
  return names;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

std::size_t parse_count(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw StructuralError("network spec: bad " + what + " '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

void QNetworkSpec::validate() const {
  if (in_channels == 0 || height == 0 || width == 0) {
    throw StructuralError("network spec: input dimensions must be positive");
  }
  if (actions < 2) throw StructuralError("network spec: need at least 2 actions");
  std::size_t h = height, w = width;
  for (const auto& c : conv) {
    if (c.channels == 0 || c.kernel == 0 || c.stride == 0) {
      throw StructuralError("network spec: conv layer fields must be positive");
    }
    if (h < c.kernel || w < c.kernel) {
      throw StructuralError("network spec: conv kernel " + std::to_string(c.kernel) +
                            " larger than its " + std::to_string(h) + "x" + std::to_string(w) +
                            " input");
    }
    h = (h - c.kernel) / c.stride + 1;
    w = (w - c.kernel) / c.stride + 1;
  }
  for (std::size_t d : dense) {
    if (d == 0) throw StructuralError("network spec: dense widths must be positive");
  }
}

std::size_t QNetworkSpec::conv_features() const {
  std::size_t h = height, w = width, c = in_channels;
  for (const auto& l : conv) {
    h = (h - l.kernel) / l.stride + 1;
    w = (w - l.kernel) / l.stride + 1;
    c = l.channels;
  }
  return c * h * w;
}

std::size_t QNetworkSpec::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layer_shapes(*this)) n += shape_size(l.weight) + shape_size(l.bias);
  return n;
}

std::string QNetworkSpec::canonical() const {
  std::ostringstream out;
  out << "in=" << in_channels << 'x' << height << 'x' << width << ";conv=";
  for (std::size_t i = 0; i < conv.size(); ++i) {
    if (i) out << ',';
    out << conv[i].channels << 'k' << conv[i].kernel << 's' << conv[i].stride;
  }
  out << ";dense=";
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (i) out << ',';
    out << dense[i];
  }
  out << ";out=" << actions << ";act=" << (relu ? "relu" : "none");
  return out.str();
}

QNetworkSpec QNetworkSpec::parse(const std::string& text) {
  QNetworkSpec spec;
  spec.conv.clear();
  spec.dense.clear();
  bool seen_in = false, seen_out = false;
  for (const auto& field : split(text, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw StructuralError("network spec: bad field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    if (key == "in") {
      const auto dims = split(val, 'x');
      if (dims.size() != 3) throw StructuralError("network spec: bad input shape '" + val + "'");
      spec.in_channels = parse_count(dims[0], "input channels");
      spec.height = parse_count(dims[1], "input height");
      spec.width = parse_count(dims[2], "input width");
      seen_in = true;
    } else if (key == "conv") {
      if (val.empty()) continue;
      for (const auto& layer : split(val, ',')) {
        const auto k = layer.find('k');
        const auto s = layer.find('s');
        if (k == std::string::npos || s == std::string::npos || s < k) {
          throw StructuralError("network spec: bad conv layer '" + layer + "'");
        }
        spec.conv.push_back({parse_count(layer.substr(0, k), "conv channels"),
                             parse_count(layer.substr(k + 1, s - k - 1), "conv kernel"),
                             parse_count(layer.substr(s + 1), "conv stride")});
      }
    } else if (key == "dense") {
      if (val.empty()) continue;
      for (const auto& width : split(val, ',')) spec.dense.push_back(parse_count(width, "dense width"));
    } else if (key == "out") {
      spec.actions = parse_count(val, "action count");
      seen_out = true;
    } else if (key == "act") {
      if (val != "relu" && val != "none") throw StructuralError("network spec: bad activation '" + val + "'");
      spec.relu = val == "relu";
    } else {
      throw StructuralError("network spec: unknown field '" + key + "'");
    }
  }
  if (!seen_in || !seen_out) throw StructuralError("network spec: 'in' and 'out' are required");
  spec.validate();
  return spec;
}

std::uint64_t QNetworkSpec::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros(const QNetworkSpec& spec) {
  spec.validate();
  ParamSet<T> p;
  p.names = param_names(spec);
  for (const auto& l : layer_shapes(spec)) {
    p.tensors.emplace_back(l.weight);
    p.tensors.emplace_back(l.bias);
  }
  return p;
}

template <typename T>
ParamSet<T> ParamSet<T>::unflatten(const QNetworkSpec& spec, std::span<const double> flat) {
  ParamSet<T> p = zeros(spec);
  if (flat.size() != p.size()) {
    throw StructuralError("unflatten: got " + std::to_string(flat.size()) + " values for " +
                          std::to_string(p.size()) + " parameters");
  }
  std::size_t k = 0;
  for (auto& t : p.tensors)
    for (T& v : t.data()) v = static_cast<T>(flat[k++]);
  return p;
}

template <typename T>
std::vector<double> ParamSet<T>::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  for (const auto& t : tensors)
    for (const T& v : t.data()) flat.push_back(static_cast<double>(v));
  return flat;
}

template <typename T>
std::size_t ParamSet<T>::size() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

template <typename T>
ParamSet<T> init_params(const QNetworkSpec& spec, std::uint64_t seed) {
  ParamSet<T> p = ParamSet<T>::zeros(spec);
  Rng rng(seed);
  const auto shapes = layer_shapes(spec);
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shapes[l].fan_in));
    for (auto* t : {&p.tensors[2 * l], &p.tensors[2 * l + 1]})
      for (T& v : t->data()) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  return p;
}

template <typename T>
QForward<T> q_forward(const QNetworkSpec& spec, const ParamSet<T>& params, const Tensor<T>& obs_batch) {
  const auto& s = obs_batch.shape();
  if (s.size() != 4 || s[0] == 0 || s[1] != spec.in_channels || s[2] != spec.height ||
      s[3] != spec.width) {
    throw StructuralError("q_forward: observation batch " + shape_string(s) +
                          " does not match network input " + shape_string(spec.input_shape(0)));
  }
  if (params.tensors.size() != 2 * (spec.conv.size() + spec.dense.size() + 1)) {
    throw StructuralError("q_forward: parameter set does not match the network spec");
  }
  QForward<T> pass;
  auto& tape = pass.tape;
  for (const auto& t : params.tensors) pass.params.push_back(tape.parameter(t));

  Var h = tape.constant(obs_batch);
  std::size_t k = 0;
  for (const auto& c : spec.conv) {
    h = tape.conv2d(h, pass.params[k], pass.params[k + 1], c.stride);
    if (spec.relu) h = tape.relu(h);
    k += 2;
  }
  h = tape.flatten(h);
  for (std::size_t i = 0; i < spec.dense.size(); ++i) {
    h = tape.dense(h, pass.params[k], pass.params[k + 1]);
    if (spec.relu) h = tape.relu(h);
    k += 2;
  }
  pass.q_values = tape.dense(h, pass.params[k], pass.params[k + 1]);
  return pass;
}

template <typename T>
Var critic_loss(QForward<T>& pass, std::span<const std::size_t> actions, std::span<const T> targets) {
  if (actions.size() != targets.size()) {
    throw StructuralError("critic_loss: " + std::to_string(actions.size()) + " actions vs " +
                          std::to_string(targets.size()) + " targets");
  }
  const Var selected = pass.tape.select(pass.q_values, actions);
  return pass.tape.mse(selected, targets);
}

template <typename T>
gradkit::FlatGradient backward(QForward<T>& pass, Var loss) {
  pass.tape.backward(loss);
  gradkit::FlatGradient flat;
  std::size_t total = 0;
  for (Var p : pass.params) total += pass.tape.value(p).size();
  flat.reserve(total);
  for (Var p : pass.params)
    for (const T& v : pass.tape.grad(p).data()) flat.push_back(static_cast<double>(v));
  return flat;
}

template <typename T>
Tensor<T> q_values(const QNetworkSpec& spec, const ParamSet<T>& params, const Tensor<T>& obs_batch) {
  auto pass = q_forward(spec, params, obs_batch);
  return pass.tape.value(pass.q_values);
}

gradkit::FlatGradient finite_diff_grad(const LossFn& loss, const ParamSet<double>& params,
                                       std::span<const std::size_t> coords, double h) {
  if (!(h > 0.0)) throw StructuralError("finite_diff_grad: step must be positive");
  // Flat index -> (tensor, offset).
  std::vector<std::size_t> starts;
  std::size_t total = 0;
  for (const auto& t : params.tensors) {
    starts.push_back(total);
    total += t.size();
  }
  ParamSet<double> probe = params;
  gradkit::FlatGradient out;
  out.reserve(coords.size());
  for (std::size_t coord : coords) {
    if (coord >= total) throw StructuralError("finite_diff_grad: coordinate out of range");
    const auto it = std::upper_bound(starts.begin(), starts.end(), coord) - 1;
    const auto ti = static_cast<std::size_t>(it - starts.begin());
    double& slot = probe.tensors[ti][coord - *it];
    const double orig = slot;
    slot = orig + h;
    const double up = loss(probe);
    slot = orig - h;
    const double down = loss(probe);
    slot = orig;
    out.push_back((up - down) / (2.0 * h));
  }
  return out;
}

gradkit::FlatGradient finite_diff_grad(const LossFn& loss, const ParamSet<double>& params, double h) {
  std::vector<std::size_t> coords(params.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  return finite_diff_grad(loss, params, coords, h);
}

template struct ParamSet<float>;
template struct ParamSet<double>;
template ParamSet<float> init_params<float>(const QNetworkSpec&, std::uint64_t);
template ParamSet<double> init_params<double>(const QNetworkSpec&, std::uint64_t);
template QForward<float> q_forward<float>(const QNetworkSpec&, const ParamSet<float>&, const Tensor<float>&);
template QForward<double> q_forward<double>(const QNetworkSpec&, const ParamSet<double>&, const Tensor<double>&);
template Var critic_loss<float>(QForward<float>&, std::span<const std::size_t>, std::span<const float>);
template Var critic_loss<double>(QForward<double>&, std::span<const std::size_t>, std::span<const double>);
template gradkit::FlatGradient backward<float>(QForward<float>&, Var);
template gradkit::FlatGradient backward<double>(QForward<double>&, Var);
template Tensor<float> q_values<float>(const QNetworkSpec&, const ParamSet<float>&, const Tensor<float>&);
template Tensor<double> q_values<double>(const QNetworkSpec&, const ParamSet<double>&, const Tensor<double>&);

}  // namespace cg2a
