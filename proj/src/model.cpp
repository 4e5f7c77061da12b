#include "shiftbench/model.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <vector>

#include "shiftbench/csv.hpp"
#include "shiftbench/errors.hpp"

namespace shiftbench {

std::string_view to_string(ModelKind k) { return k == ModelKind::Logistic ? "logistic" : "mlp"; }

ModelKind parse_model_kind(std::string_view s) {
  if (s == "logistic") return ModelKind::Logistic;
  if (s == "mlp") return ModelKind::Mlp;
  throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

void ModelSpec::validate() const {
  if (input_side <= 0) throw ConfigError("input_side must be positive");
  if (kind == ModelKind::Mlp && hidden_units <= 0) throw ConfigError("hidden_units must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (max_epochs <= 0) throw ConfigError("max_epochs must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
}

nlohmann::ordered_json to_json(const ModelSpec& s) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(s.kind));
  j["input_side"] = s.input_side;
  j["hidden_units"] = s.hidden_units;
  j["learning_rate"] = s.learning_rate;
  j["batch_size"] = s.batch_size;
  j["max_epochs"] = s.max_epochs;
  j["weight_decay"] = s.weight_decay;
  j["seed"] = s.seed;
  return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j, const ModelSpec& defaults) {
  try {
    ModelSpec s = defaults;
    if (j.contains("kind")) s.kind = parse_model_kind(j["kind"].get<std::string>());
    s.input_side = j.value("input_side", s.input_side);
    s.hidden_units = j.value("hidden_units", s.hidden_units);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.max_epochs = j.value("max_epochs", s.max_epochs);
    s.weight_decay = j.value("weight_decay", s.weight_decay);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["format"] = "shiftbench-model-v1";
  header["spec"] = to_json(model.spec);
  header["input_dim"] = model.shape.input_dim;
  header["hidden_units"] = model.shape.hidden;
  header["parameter_count"] = model.parameters.size();
  header["selected_epoch"] = model.selected_epoch;
  header["val_metric"] = model.val_metric;

  std::string out = header.dump() + "\n";
  for (Eigen::Index i = 0; i < model.parameters.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(model.parameters(i));
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
  }
  csv::write_atomic(path, out);
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  TrainedModel m;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format") != "shiftbench-model-v1") throw DataError("unknown model format");
    m.spec = model_spec_from_json(header.at("spec"));
    m.shape.kind = m.spec.kind;
    m.shape.input_dim = header.at("input_dim").get<Eigen::Index>();
    m.shape.hidden = header.at("hidden_units").get<Eigen::Index>();
    m.selected_epoch = header.at("selected_epoch").get<int>();
    m.val_metric = header.at("val_metric").get<double>();
    const auto count = header.at("parameter_count").get<Eigen::Index>();
    if (count != m.shape.parameter_count() || blob.size() != static_cast<std::size_t>(count) * 8)
      throw DataError("model parameter blob has the wrong size");
    m.parameters.resize(count);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  for (Eigen::Index i = 0; i < m.parameters.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[static_cast<std::size_t>(i) * 8 + b]))
              << (8 * b);
    m.parameters(i) = std::bit_cast<double>(bits);
  }
  if (!m.parameters.allFinite()) throw NumericError(path.string() + ": non-finite parameters");
  return m;
}

}  // namespace shiftbench
