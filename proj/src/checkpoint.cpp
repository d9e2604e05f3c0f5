#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hcal/trainer.hpp"

namespace hcal {

namespace {

using Json = nlohmann::ordered_json;

Json matrix_json(const Matrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

Matrix matrix_from(const nlohmann::json& j, const std::string& what) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
    throw DataError("checkpoint: corrupt tensor '" + what + "'");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  if (!m.allFinite()) throw DataError("checkpoint: non-finite values in '" + what + "'");
  return m;
}

void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols)
    throw DataError("checkpoint: dimension mismatch for '" + what + "': expected " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ", found " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

const char* perturb_name(PerturbMode m) {
  return m == PerturbMode::per_step ? "per_step" : m == PerturbMode::fixed ? "static" : "off";
}

PerturbMode perturb_from(const std::string& s) {
  if (s == "per_step") return PerturbMode::per_step;
  if (s == "static") return PerturbMode::fixed;
  if (s == "off") return PerturbMode::off;
  throw DataError("checkpoint: unknown perturbation mode '" + s + "'");
}

}  // namespace

void save_checkpoint(const TrainConfig& config, const TrainState& state, const Taxonomy& tax,
                     const std::filesystem::path& path) {
  Json doc;
  doc["format"] = "hcal-checkpoint";
  doc["version"] = kCheckpointVersion;
  Json cfg = Json::object();
  for (const auto& [key, value] : train_config_entries(config)) cfg[key] = value;
  doc["config"] = std::move(cfg);
  doc["classes_per_level"] = tax.classes_per_level();
  doc["input_dim"] = state.models.empty() ? 0 : state.models.front().encoder.config.input_dim;
  doc["feature_dim"] = config.feature_dim;
  doc["epoch"] = state.epoch;
  doc["step"] = state.step;

  Json models = Json::array();
  for (const auto& model : state.models) {
    Json mj;
    const auto& ec = model.encoder.config;
    mj["encoder"] = {{"input_dim", ec.input_dim},
                     {"hidden_dims", ec.hidden_dims},
                     {"output_dim", ec.output_dim},
                     {"seed", ec.seed},
                     {"trainable", ec.trainable == Trainable::all ? "all" : "last_layer"}};
    Json layers = Json::array();
    for (const auto* p : model.encoder.parameters()) {
      Json t = matrix_json(p->tensor.value());
      t["name"] = p->name;
      t["requires_grad"] = p->tensor.requires_grad();
      layers.push_back(std::move(t));
    }
    mj["encoder_parameters"] = std::move(layers);
    Json bank;
    bank["epsilon"] = model.bank.epsilon;
    bank["mode"] = perturb_name(model.bank.mode);
    bank["seed"] = model.bank.seed;
    Json protos = Json::array();
    for (const auto& p : model.bank.levels) {
      Json t = matrix_json(p.tensor.value());
      t["name"] = p.name;
      t["requires_grad"] = p.tensor.requires_grad();
      protos.push_back(std::move(t));
    }
    bank["prototypes"] = std::move(protos);
    Json noise = Json::array();
    for (const auto& n : model.bank.fixed_noise) noise.push_back(matrix_json(n));
    bank["fixed_noise"] = std::move(noise);
    mj["bank"] = std::move(bank);
    models.push_back(std::move(mj));
  }
  doc["models"] = std::move(models);

  Json velocity = Json::object();
  for (const auto& [name, v] : state.optimizer.velocity) velocity[name] = matrix_json(v);
  doc["velocity"] = std::move(velocity);
  Json rates = Json::object();
  for (const auto& [group, lr] : state.optimizer.learning_rates) rates[group] = lr;
  doc["learning_rates"] = std::move(rates);
  doc["balancer"] = {{"smoothed", state.balancer.smoothed}, {"previous", state.balancer.previous}};

  std::ofstream out(path);
  if (!out) throw DataError("checkpoint: cannot write " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw DataError("checkpoint: write failed for " + path.string());
}

Checkpoint parse_checkpoint(const std::string& text, std::optional<int> expected_feature_dim) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: corrupt file: ") + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("format", "") != "hcal-checkpoint")
      throw DataError("checkpoint: not an hcal checkpoint");
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw DataError("checkpoint: version mismatch (file " + std::to_string(version) + ", supported " +
                      std::to_string(kCheckpointVersion) + ")");

    Checkpoint ck;
    for (const auto& [key, value] : doc.at("config").items()) {
      if (!set_train_config_value(ck.config, key, value.get<std::string>()))
        throw DataError("checkpoint: unknown config key '" + key + "'");
    }
    ck.classes_per_level = doc.at("classes_per_level").get<std::vector<int>>();
    ck.input_dim = doc.at("input_dim").get<int>();
    const int d = doc.at("feature_dim").get<int>();
    if (d != ck.config.feature_dim) throw DataError("checkpoint: feature_dim disagrees with the config echo");
    if (expected_feature_dim && *expected_feature_dim != d)
      throw DataError("checkpoint: dimension mismatch: file has d=" + std::to_string(d) + ", expected " +
                      std::to_string(*expected_feature_dim));
    const int m = static_cast<int>(ck.classes_per_level.size());

    TrainState& st = ck.state;
    st.epoch = doc.at("epoch").get<int>();
    st.step = doc.at("step").get<std::uint64_t>();
    for (const auto& mj : doc.at("models")) {
      const auto& ej = mj.at("encoder");
      EncoderConfig ec;
      ec.input_dim = ej.at("input_dim").get<int>();
      ec.hidden_dims = ej.at("hidden_dims").get<std::vector<int>>();
      ec.output_dim = ej.at("output_dim").get<int>();
      ec.seed = ej.at("seed").get<std::uint64_t>();
      ec.trainable = ej.at("trainable").get<std::string>() == "all" ? Trainable::all : Trainable::last_layer;
      if (ec.input_dim != ck.input_dim || ec.output_dim != d)
        throw DataError("checkpoint: dimension mismatch between encoder and header");
      Model model{init_encoder(ec), {}};
      auto params = model.encoder.parameters();
      const auto& stored = mj.at("encoder_parameters");
      if (stored.size() != params.size()) throw DataError("checkpoint: encoder layer count mismatch");
      for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix v = matrix_from(stored[i], params[i]->name);
        expect_shape(v, params[i]->tensor.rows(), params[i]->tensor.cols(), params[i]->name);
        params[i]->name = stored[i].at("name").get<std::string>();
        params[i]->tensor = Tensor(std::move(v), stored[i].at("requires_grad").get<bool>());
      }

      const auto& bj = mj.at("bank");
      model.bank.epsilon = bj.at("epsilon").get<double>();
      model.bank.mode = perturb_from(bj.at("mode").get<std::string>());
      model.bank.seed = bj.at("seed").get<std::uint64_t>();
      const auto& protos = bj.at("prototypes");
      if (static_cast<int>(protos.size()) != m) throw DataError("checkpoint: prototype level count mismatch");
      for (int k = 1; k <= m; ++k) {
        const auto& pj = protos[k - 1];
        const std::string name = pj.at("name").get<std::string>();
        Matrix v = matrix_from(pj, name);
        expect_shape(v, ck.classes_per_level[k - 1], d, name);
        model.bank.levels.push_back(
            {name, {ParamGroup::Kind::prototypes, k}, Tensor(std::move(v), pj.at("requires_grad").get<bool>())});
      }
      for (const auto& nj : bj.at("fixed_noise")) {
        Matrix n = matrix_from(nj, "fixed_noise");
        const int k = static_cast<int>(model.bank.fixed_noise.size()) + 1;
        if (k > m) throw DataError("checkpoint: too many fixed noise matrices");
        expect_shape(n, ck.classes_per_level[k - 1], d, "fixed_noise");
        model.bank.fixed_noise.push_back(std::move(n));
      }
      st.models.push_back(std::move(model));
    }
    if (st.models.empty()) throw DataError("checkpoint: no models");

    for (const auto& [name, vj] : doc.at("velocity").items()) {
      st.optimizer.velocity[name] = matrix_from(vj, name);
    }
    for (const auto* p : st.parameters()) {
      auto it = st.optimizer.velocity.find(p->name);
      if (p->tensor.requires_grad() && it == st.optimizer.velocity.end())
        throw DataError("checkpoint: missing velocity for " + p->name);
      if (it != st.optimizer.velocity.end()) expect_shape(it->second, p->tensor.rows(), p->tensor.cols(), p->name);
    }
    for (const auto& [group, lr] : doc.at("learning_rates").items()) st.optimizer.learning_rates[group] = lr.get<double>();

    BalancerConfig bc;
    bc.adaptive = ck.config.adaptive();
    bc.gamma = ck.config.gamma;
    bc.fixed_weights = ck.config.fixed_weights;
    bc.source = ck.config.weight_source;
    bc.ema = ck.config.weight_ema;
    st.balancer = LossBalancer(bc, m);
    st.balancer.smoothed = doc.at("balancer").at("smoothed").get<std::vector<double>>();
    st.balancer.previous = doc.at("balancer").at("previous").get<std::vector<double>>();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: corrupt file: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<int> expected_feature_dim) {
  std::ifstream in(path);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str(), expected_feature_dim);
}

}  // namespace hcal
