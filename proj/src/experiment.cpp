#include "mplstm/experiment.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <algorithm>

#include <json.hpp>

namespace mplstm {

namespace {

using nlohmann::json;

CellKind parse_cell(const std::string& s) {
  if (s == "mp") return CellKind::Mp;
  if (s == "vanilla") return CellKind::Vanilla;
  if (s == "ablation_a") return CellKind::AblationA;
  if (s == "ablation_b") return CellKind::AblationB;
  if (s == "ablation_c") return CellKind::AblationC;
  throw ConfigError("config: unknown cell \"" + s + "\"");
}

FusionMode parse_fusion(const std::string& s) {
  if (s == "joint") return FusionMode::Joint;
  if (s == "feature_dim") return FusionMode::FeatureConcatDim;
  if (s == "feature_time") return FusionMode::FeatureConcatTime;
  if (s == "score") return FusionMode::Score;
  throw ConfigError("config: unknown fusion \"" + s + "\"");
}

std::string get_string(const json& v, const char* key) {
  if (!v.is_string()) throw ConfigError(std::string("config: \"") + key + "\" must be a string");
  return v.get<std::string>();
}

bool get_bool(const json& v, const char* key) {
  if (!v.is_boolean()) throw ConfigError(std::string("config: \"") + key + "\" must be a boolean");
  return v.get<bool>();
}

std::uint64_t get_count(const json& v, const char* key) {
  if (!v.is_number_unsigned()) {
    throw ConfigError(std::string("config: \"") + key + "\" must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double get_real(const json& v, const char* key) {
  if (!v.is_number()) throw ConfigError(std::string("config: \"") + key + "\" must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(std::string("config: \"") + key + "\" must be finite");
  return d;
}

json config_json(const ExperimentConfig& c) {
  json j;
  j["cell"] = std::string(to_string(c.cell));
  j["fusion"] = std::string(to_string(c.fusion));
  j["bidirectional"] = c.bidirectional;
  j["hidden"] = c.hidden;
  j["attention"] = c.attention;
  j["dropout"] = c.dropout;
  j["lr"] = c.lr;
  j["rho"] = c.rho;
  j["epsilon"] = c.epsilon;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  return j;
}

ExperimentConfig config_from(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "cell") c.cell = parse_cell(get_string(value, "cell"));
    else if (key == "fusion") c.fusion = parse_fusion(get_string(value, "fusion"));
    else if (key == "bidirectional") c.bidirectional = get_bool(value, "bidirectional");
    else if (key == "hidden") c.hidden = get_count(value, "hidden");
    else if (key == "attention") c.attention = get_bool(value, "attention");
    else if (key == "dropout") c.dropout = get_real(value, "dropout");
    else if (key == "lr") c.lr = get_real(value, "lr");
    else if (key == "rho") c.rho = get_real(value, "rho");
    else if (key == "epsilon") c.epsilon = get_real(value, "epsilon");
    else if (key == "batch_size") c.batch_size = get_count(value, "batch_size");
    else if (key == "epochs") c.epochs = get_count(value, "epochs");
    else if (key == "seed") c.seed = get_count(value, "seed");
    else throw ConfigError("config: unknown key \"" + key + "\"");
  }
  if (c.hidden == 0) throw ConfigError("config: hidden must be >= 1");
  if (c.epochs == 0) throw ConfigError("config: epochs must be >= 1");
  c.train().validate();
  NetworkConfig probe;
  probe.cell = c.cell;
  probe.fusion = c.fusion;
  probe.hidden_dim = c.hidden;
  probe.dropout_rate = c.dropout;
  probe.validate();
  return c;
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>(v >> (8 * k)));
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read from " + path.string() + " failed");
  return bytes;
}

void spill(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return config_from(j);
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string ExperimentConfig::to_json() const { return config_json(*this).dump(); }

NetworkConfig ExperimentConfig::network(const Dataset& data) const {
  NetworkConfig n;
  n.cell = cell;
  n.fusion = fusion;
  n.bidirectional = bidirectional;
  n.hidden_dim = hidden;
  n.attention = attention;
  n.dropout_rate = dropout;
  n = with_dataset_dims(n, data);
  n.validate();
  return n;
}

TrainConfig ExperimentConfig::train() const {
  TrainConfig t;
  t.batch_size = batch_size;
  t.num_epochs = epochs;
  t.optimizer = {lr, rho, epsilon};
  t.dropout_rate = dropout;
  t.seed = seed;
  return t;
}

std::vector<unsigned char> encode_model(const ExperimentConfig& config, const Model& model) {
  json doc;
  doc["config"] = config_json(config);
  doc["num_perspectives"] = model.config.num_perspectives;
  doc["input_dim"] = model.config.input_dim;
  doc["num_classes"] = model.config.num_classes;
  const std::string text = doc.dump();
  if (text.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw CountOverflowError("model config does not fit in an MPM1 header");
  }

  std::vector<unsigned char> out(std::begin(kModelMagic), std::end(kModelMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& member : model.members) {
    member.check();
    for (const auto& t : named_tensors(member.params)) {
      for (double v : t.data) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int k = 0; k < 8; ++k) out.push_back(static_cast<unsigned char>(bits >> (8 * k)));
      }
    }
  }
  return out;
}

ModelFile decode_model(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kModelMagic), std::end(kModelMagic), bytes.begin())) {
    throw BadMagicError("not an MPM1 file");
  }
  if (bytes.size() < 8) throw TruncatedError("MPM1 header truncated");
  std::uint32_t len = 0;
  for (int k = 0; k < 4; ++k) len |= static_cast<std::uint32_t>(bytes[4 + k]) << (8 * k);
  if (bytes.size() - 8 < len) throw TruncatedError("MPM1 config truncated");

  json doc;
  try {
    doc = json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("MPM1 embedded config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.size() != 4 || !doc.contains("config") ||
      !doc.contains("num_perspectives") || !doc.contains("input_dim") ||
      !doc.contains("num_classes")) {
    throw FormatError("MPM1 embedded config has the wrong keys");
  }
  ModelFile file;
  file.config = config_from(doc["config"]);
  NetworkConfig net;
  net.cell = file.config.cell;
  net.fusion = file.config.fusion;
  net.bidirectional = file.config.bidirectional;
  net.hidden_dim = file.config.hidden;
  net.attention = file.config.attention;
  net.dropout_rate = file.config.dropout;
  net.num_perspectives = get_count(doc["num_perspectives"], "num_perspectives");
  net.input_dim = get_count(doc["input_dim"], "input_dim");
  net.num_classes = get_count(doc["num_classes"], "num_classes");
  file.model = Model::zeros(net);

  std::size_t total = 0;
  for (const auto& member : file.model.members) total += parameter_count(member.params);
  const std::size_t payload = bytes.size() - 8 - len;
  if (total > (std::numeric_limits<std::size_t>::max() / 8) || payload < total * 8) {
    throw TruncatedError("MPM1 tensors truncated: " + std::to_string(payload) + " bytes, config needs " +
                         std::to_string(total * 8));
  }
  if (payload > total * 8) {
    throw TrailingBytesError("MPM1 file has " + std::to_string(payload - total * 8) +
                             " bytes beyond the tensors its config describes");
  }
  const unsigned char* cursor = bytes.data() + 8 + len;
  for (auto& member : file.model.members) {
    for (auto& t : named_tensors(member.params)) {
      for (auto& v : t.data) {
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(cursor[k]) << (8 * k);
        v = std::bit_cast<double>(bits);
        cursor += 8;
      }
    }
  }
  return file;
}

void write_model(const std::filesystem::path& path, const ExperimentConfig& config,
                 const Model& model) {
  const auto bytes = encode_model(config, model);
  spill(path, bytes.data(), bytes.size());
}

ModelFile read_model(const std::filesystem::path& path) { return decode_model(slurp(path)); }

std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
  if (rows.empty()) throw ValidationError("metrics CSV needs at least one row");
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%zu,%.6g,%.6g,%.6g,%.6g\n", r.epoch, r.train_loss,
                  r.train_acc, r.val_loss, r.val_acc);
    out += line;
  }
  return out;
}

void emit_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  const std::string text = format_metrics_csv(rows);
  spill(path, text.data(), text.size());
}

TrainOutcome run_training(const ExperimentConfig& config, const Dataset& train, const Dataset& val,
                          const std::function<void(const MetricsRow&)>& on_epoch) {
  if (train.empty()) throw ValidationError("training set is empty");
  if (val.empty()) throw ValidationError("validation set is empty");
  const NetworkConfig net = config.network(train);
  if (val.num_perspectives != train.num_perspectives || val.feature_dim != train.feature_dim ||
      val.num_classes != train.num_classes) {
    throw ValidationError("validation set shape (m, d, K) differs from the training set");
  }
  const TrainConfig tc = config.train();
  ModelTrainer trainer(net, tc);
  TrainOutcome outcome;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const EpochMetrics e = trainer.train_epoch(train);
    MetricsRow row{epoch, e.loss, e.accuracy, std::nan(""), std::nan("")};
    if (epoch % tc.metrics_every == 0 || epoch == config.epochs) {
      const EvalResult v = evaluate(trainer.model(), val);
      row.val_loss = v.loss;
      row.val_acc = v.accuracy;
    }
    outcome.rows.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  outcome.model = trainer.model();
  return outcome;
}

}  // namespace mplstm
