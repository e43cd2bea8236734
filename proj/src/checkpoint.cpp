#include <fstream>
#include <sstream>

#include <json.hpp>

#include "shiftsched/predictors.hpp"

namespace shiftsched {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "shiftsched.checkpoint";
constexpr int kVersion = 1;

json vec_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vec_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json mat_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_to_json(m.row(i).transpose()));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Matrix mat_from_json(const json& j) {
  const auto r = j.at("rows").get<Eigen::Index>();
  const auto c = j.at("cols").get<Eigen::Index>();
  Matrix m(r, c);
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != r) throw std::runtime_error("checkpoint matrix row count mismatch");
  for (Eigen::Index i = 0; i < r; ++i) {
    const Vector row = vec_from_json(data.at(static_cast<std::size_t>(i)));
    if (row.size() != c) throw std::runtime_error("checkpoint matrix column count mismatch");
    m.row(i) = row.transpose();
  }
  return m;
}

json mlp_to_json(const nn::Mlp& m) {
  json layers = json::array();
  for (const auto& l : m.layers()) {
    layers.push_back({{"input_dim", l.spec.input_dim},
                      {"output_dim", l.spec.output_dim},
                      {"activation", l.spec.activation == nn::Activation::relu ? "relu" : "identity"},
                      {"dropout_rate", l.spec.dropout_rate},
                      {"l2_strength", l.spec.l2_strength},
                      {"weights", mat_to_json(l.weights)},
                      {"bias", vec_to_json(l.bias)}});
  }
  return layers;
}

nn::Mlp mlp_from_json(const json& j) {
  std::vector<nn::Layer> layers;
  for (const auto& lj : j) {
    nn::Layer l;
    l.spec.input_dim = lj.at("input_dim").get<int>();
    l.spec.output_dim = lj.at("output_dim").get<int>();
    const auto act = lj.at("activation").get<std::string>();
    if (act != "relu" && act != "identity") throw std::runtime_error("unknown activation: " + act);
    l.spec.activation = act == "relu" ? nn::Activation::relu : nn::Activation::identity;
    l.spec.dropout_rate = lj.at("dropout_rate").get<double>();
    l.spec.l2_strength = lj.at("l2_strength").get<double>();
    l.weights = mat_from_json(lj.at("weights"));
    l.bias = vec_from_json(lj.at("bias"));
    layers.push_back(std::move(l));
  }
  return nn::Mlp(std::move(layers));
}

json standardizer_to_json(const Standardizer& s) { return {{"mean", vec_to_json(s.mean)}, {"sd", vec_to_json(s.sd)}}; }

Standardizer standardizer_from_json(const json& j) {
  Standardizer s;
  s.mean = vec_from_json(j.at("mean"));
  s.sd = vec_from_json(j.at("sd"));
  if (s.mean.size() != s.sd.size()) throw std::runtime_error("standardizer moment lengths differ");
  return s;
}

json hyper_to_json(const DnnHyper& h) {
  return {{"extractor_width", h.extractor_width}, {"regressor_width", h.regressor_width},
          {"epochs", h.epochs},                   {"batch_size", h.batch_size},
          {"l2", h.l2},                           {"dropout", h.dropout},
          {"learning_rate", h.learning_rate}};
}

DnnHyper hyper_from_json(const json& j) {
  DnnHyper h;
  h.extractor_width = j.at("extractor_width").get<int>();
  h.regressor_width = j.at("regressor_width").get<int>();
  h.epochs = j.at("epochs").get<int>();
  h.batch_size = j.at("batch_size").get<int>();
  h.l2 = j.at("l2").get<double>();
  h.dropout = j.at("dropout").get<double>();
  h.learning_rate = j.at("learning_rate").get<double>();
  return h;
}

json network_to_json(const NetworkModel& m) {
  return {{"standardizer", standardizer_to_json(m.standardizer)},
          {"extractor", mlp_to_json(m.extractor)},
          {"regressor", mlp_to_json(m.regressor)},
          {"target_center", m.target_center},
          {"target_scale", m.target_scale},
          {"hyper", hyper_to_json(m.hyper)}};
}

NetworkModel network_from_json(const json& j) {
  NetworkModel m;
  m.standardizer = standardizer_from_json(j.at("standardizer"));
  m.extractor = mlp_from_json(j.at("extractor"));
  m.regressor = mlp_from_json(j.at("regressor"));
  m.target_center = j.at("target_center").get<double>();
  m.target_scale = j.at("target_scale").get<double>();
  m.hyper = hyper_from_json(j.at("hyper"));
  if (m.extractor.input_dim() != m.standardizer.dims() || m.extractor.output_dim() != m.regressor.input_dim()) {
    throw std::runtime_error("checkpoint network dimensions do not chain");
  }
  return m;
}

}  // namespace

std::string to_text(const Predictor& p) {
  json j{{"format", kFormat}, {"version", kVersion}};
  if (const auto* lin = std::get_if<LinearPredictor>(&p)) {
    j["kind"] = "elastic_net";
    j["standardizer"] = standardizer_to_json(lin->standardizer);
    j["coefficients"] = vec_to_json(lin->model.coefficients);
    j["intercept"] = lin->model.intercept;
    j["lambda"] = lin->model.lambda;
    j["ratio"] = lin->model.ratio;
  } else if (const auto* net = std::get_if<NetworkModel>(&p)) {
    j["kind"] = "network";
    j["network"] = network_to_json(*net);
  } else {
    const auto& w = std::get<WdgrlModel>(p);
    j["kind"] = "wdgrl";
    j["network"] = network_to_json(w.network);
    j["critic"] = mlp_to_json(w.critic);
    j["alpha"] = w.params.alpha;
    j["beta"] = w.params.beta;
    j["n_critic"] = w.params.n_critic;
    j["critic_width"] = w.params.critic_width;
    json log = json::array();
    for (const auto& e : w.log.epochs) log.push_back({e.regression_loss, e.wasserstein, e.penalty});
    j["train_log"] = log;
  }
  return j.dump(1);
}

Predictor predictor_from_text(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("format", "") != kFormat) throw std::runtime_error("not a shiftsched checkpoint");
  if (j.value("version", 0) != kVersion) throw std::runtime_error("unsupported checkpoint version");
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "elastic_net") {
    LinearPredictor p;
    p.standardizer = standardizer_from_json(j.at("standardizer"));
    p.model.coefficients = vec_from_json(j.at("coefficients"));
    p.model.intercept = j.at("intercept").get<double>();
    p.model.lambda = j.at("lambda").get<double>();
    p.model.ratio = j.at("ratio").get<double>();
    p.model.converged = true;
    if (p.model.coefficients.size() != p.standardizer.dims()) throw std::runtime_error("coefficient count mismatch");
    return p;
  }
  if (kind == "network") return network_from_json(j.at("network"));
  if (kind == "wdgrl") {
    WdgrlModel w;
    w.network = network_from_json(j.at("network"));
    w.critic = mlp_from_json(j.at("critic"));
    w.params.alpha = j.at("alpha").get<double>();
    w.params.beta = j.at("beta").get<double>();
    w.params.n_critic = j.at("n_critic").get<int>();
    w.params.critic_width = j.at("critic_width").get<int>();
    for (const auto& e : j.at("train_log")) {
      w.log.epochs.push_back({e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()});
    }
    return w;
  }
  throw std::runtime_error("unknown checkpoint kind: " + kind);
}

void save_checkpoint(const Predictor& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_text(p) << '\n';
}

Predictor load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return predictor_from_text(ss.str());
}

std::vector<double> predict(const Predictor& p, const Matrix& X) {
  return std::visit([&](const auto& model) { return predict(model, X); }, p);
}

}  // namespace shiftsched
