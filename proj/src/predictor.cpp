#include "stcrank/predictor.hpp"

#include "stcrank/error.hpp"
#include "stcrank/rng.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace stcrank {

namespace {

double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

constexpr char kBinaryMagic[8] = {'S', 'T', 'C', 'R', 'M', 'D', 'L', '\0'};
constexpr std::uint32_t kModelVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "binary model format assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw InputError("truncated binary model");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

bool nonzero_bits(double w) { return std::bit_cast<std::uint64_t>(w) != 0; }

}  // namespace

ObjectiveScores::ObjectiveScores(double vtr, double cvr, double sdr) {
  set(Objective::vtr, vtr);
  set(Objective::cvr, cvr);
  set(Objective::sdr, sdr);
}

double ObjectiveScores::operator[](Objective o) const {
  if (!has(o)) throw LookupError("score for objective '" + std::string(name(o)) + "' is missing");
  return value_[index(o)];
}

ObjectiveScores& ObjectiveScores::set(Objective o, double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw InputError("score for objective '" + std::string(name(o)) + "' must lie in [0, 1]");
  value_[index(o)] = p;
  present_ |= static_cast<std::uint8_t>(1u << index(o));
  return *this;
}

TrainConfig train_config_from(const Config& c, const std::string& section,
                              const TrainConfig& fallback) {
  TrainConfig t;
  t.learning_rate = c.get_double(section + "/learning_rate", fallback.learning_rate);
  t.epochs = static_cast<int>(c.get_int(section + "/epochs", fallback.epochs));
  t.l2 = c.get_double(section + "/l2", fallback.l2);
  if (!(t.learning_rate > 0.0)) throw ConfigError(section + "/learning_rate must be positive");
  if (t.epochs < 1) throw ConfigError(section + "/epochs must be >= 1");
  if (t.l2 < 0.0) throw ConfigError(section + "/l2 must be non-negative");
  return t;
}

double LogisticHead::logit(const FeatureVector& f) const {
  double s = bias;
  for (const auto& x : f) s += weights[x.id] * x.value;
  return s;
}

double LogisticHead::predict(const FeatureVector& f) const { return sigmoid(logit(f)); }

const LogisticHead& PredictorModel::head(Objective o) const {
  const auto& h = heads_[static_cast<int>(o)];
  if (!h) throw LookupError("model has no head for objective '" + std::string(name(o)) + "'");
  return *h;
}

LogisticHead& PredictorModel::head(Objective o) {
  auto& h = heads_[static_cast<int>(o)];
  if (!h) throw LookupError("model has no head for objective '" + std::string(name(o)) + "'");
  return *h;
}

PredictorModel PredictorModel::zeros(std::span<const Objective> objectives) {
  PredictorModel m;
  for (auto o : objectives) m.set_head(o, LogisticHead{});
  return m;
}

double weighted_bce_loss(const LogisticHead& head, std::span<const TrainingSample> samples) {
  double loss = 0.0;
  for (const auto& s : samples) {
    const double z = head.logit(s.features);
    loss += s.weight * (softplus(z) - s.label * z);
  }
  return loss;
}

HeadGradient weighted_bce_gradient(const LogisticHead& head, std::span<const TrainingSample> samples) {
  HeadGradient g;
  for (const auto& s : samples) {
    const double r = s.weight * (sigmoid(head.logit(s.features)) - s.label);
    g.bias += r;
    for (const auto& x : s.features) g.weights[x.id] += r * x.value;
  }
  return g;
}

PredictorModel train(std::span<const TrainingSample> samples, const TrainConfig& hyper,
                     std::uint64_t seed, std::vector<EpochMetric>* metrics) {
  PredictorModel model;
  model.hyper = hyper;
  model.seed = seed;

  for (auto objective : kAllObjectives) {
    std::vector<const TrainingSample*> data;
    bool present = false, positive = false, negative = false;
    for (const auto& s : samples) {
      if (s.objective != objective) continue;
      present = true;
      if (s.weight < 0.0) throw InputError("sample weights must be non-negative");
      if (s.weight == 0.0) continue;
      data.push_back(&s);
      (s.label == 1 ? positive : negative) = true;
    }
    if (!present) continue;
    if (!positive || !negative)
      throw DegenerateError("objective '" + std::string(name(objective)) + "' has only " +
                            (positive ? "positive" : "negative") + " weighted samples");

    LogisticHead head;
    std::vector<std::uint32_t> order(data.size());
    std::iota(order.begin(), order.end(), 0u);
    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
      Rng rng(stream_key({seed, tag("train"), static_cast<std::uint64_t>(objective),
                          static_cast<std::uint64_t>(epoch)}));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      double loss = 0.0;
      for (auto idx : order) {
        const auto& s = *data[idx];
        const double z = head.logit(s.features);
        loss += s.weight * (softplus(z) - s.label * z);
        const double g = s.weight * (sigmoid(z) - s.label);
        head.bias -= hyper.learning_rate * g;
        for (const auto& x : s.features) {
          double& w = head.weights[x.id];
          w -= hyper.learning_rate * (g * x.value + hyper.l2 * w);
        }
      }
      if (metrics) metrics->push_back({objective, epoch, loss / static_cast<double>(data.size()), data.size()});
    }
    model.set_head(objective, std::move(head));
  }
  return model;
}

double predict(const PredictorModel& model, Objective objective, const FeatureVector& features) {
  return model.head(objective).predict(features);
}

ObjectiveScores predict(const PredictorModel& model, const FeatureVector& features,
                        std::span<const Objective> objectives) {
  ObjectiveScores out;
  for (auto o : objectives) out.set(o, model.head(o).predict(features));
  return out;
}

ModelFormat model_format_from(const std::string& s) {
  if (s == "binary") return ModelFormat::binary;
  if (s == "json") return ModelFormat::json;
  throw ConfigError("model format must be 'binary' or 'json', got '" + s + "'");
}

nlohmann::json to_json(const PredictorModel& model) {
  nlohmann::json heads = nlohmann::json::object();
  for (auto o : kAllObjectives) {
    if (!model.has(o)) continue;
    const auto& h = model.head(o);
    nlohmann::json w = nlohmann::json::array();
    for (std::uint32_t i = 0; i < kFeatureTableSize; ++i)
      if (nonzero_bits(h.weights[i])) w.push_back({i, h.weights[i]});
    heads[std::string(name(o))] = {{"bias", h.bias}, {"weights", w}};
  }
  return {{"v", kModelVersion},
          {"format", "stcrank-model"},
          {"feature_bits", kFeatureBits},
          {"seed", model.seed},
          {"hyper",
           {{"learning_rate", model.hyper.learning_rate},
            {"epochs", model.hyper.epochs},
            {"l2", model.hyper.l2}}},
          {"heads", heads}};
}

PredictorModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("v").get<std::uint32_t>() != kModelVersion) throw InputError("unsupported model version");
    if (j.at("feature_bits").get<unsigned>() != kFeatureBits)
      throw InputError("model was trained with a different feature table size");
    PredictorModel m;
    m.seed = j.at("seed");
    const auto& h = j.at("hyper");
    m.hyper = {h.at("learning_rate"), h.at("epochs"), h.at("l2")};
    for (const auto& [key, head] : j.at("heads").items()) {
      LogisticHead lh;
      lh.bias = head.at("bias");
      for (const auto& w : head.at("weights")) {
        const auto id = w.at(0).get<std::uint32_t>();
        if (id >= kFeatureTableSize) throw InputError("feature id out of range");
        lh.weights[id] = w.at(1);
      }
      m.set_head(objective_from(key), std::move(lh));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed model file: ") + e.what());
  }
}

std::string to_binary(const PredictorModel& model) {
  std::string out(kBinaryMagic, sizeof(kBinaryMagic));
  put<std::uint32_t>(out, kModelVersion);
  put<std::uint32_t>(out, kFeatureBits);
  put<std::uint64_t>(out, model.seed);
  put<double>(out, model.hyper.learning_rate);
  put<std::int32_t>(out, model.hyper.epochs);
  put<double>(out, model.hyper.l2);
  std::uint32_t heads = 0;
  for (auto o : kAllObjectives) heads += model.has(o) ? 1 : 0;
  put<std::uint32_t>(out, heads);
  for (auto o : kAllObjectives) {
    if (!model.has(o)) continue;
    const auto& h = model.head(o);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(o));
    put<double>(out, h.bias);
    std::uint32_t nnz = 0;
    for (double w : h.weights) nnz += nonzero_bits(w) ? 1 : 0;
    put<std::uint32_t>(out, nnz);
    for (std::uint32_t i = 0; i < kFeatureTableSize; ++i) {
      if (!nonzero_bits(h.weights[i])) continue;
      put<std::uint32_t>(out, i);
      put<double>(out, h.weights[i]);
    }
  }
  return out;
}

PredictorModel model_from_binary(const std::string& bytes) {
  if (bytes.size() < sizeof(kBinaryMagic) ||
      std::memcmp(bytes.data(), kBinaryMagic, sizeof(kBinaryMagic)) != 0)
    throw InputError("not a binary model file");
  std::size_t pos = sizeof(kBinaryMagic);
  if (take<std::uint32_t>(bytes, pos) != kModelVersion) throw InputError("unsupported model version");
  if (take<std::uint32_t>(bytes, pos) != kFeatureBits)
    throw InputError("model was trained with a different feature table size");
  PredictorModel m;
  m.seed = take<std::uint64_t>(bytes, pos);
  m.hyper.learning_rate = take<double>(bytes, pos);
  m.hyper.epochs = take<std::int32_t>(bytes, pos);
  m.hyper.l2 = take<double>(bytes, pos);
  const auto heads = take<std::uint32_t>(bytes, pos);
  for (std::uint32_t k = 0; k < heads; ++k) {
    const auto o = take<std::uint8_t>(bytes, pos);
    if (o >= kAllObjectives.size()) throw InputError("unknown objective in binary model");
    LogisticHead h;
    h.bias = take<double>(bytes, pos);
    const auto nnz = take<std::uint32_t>(bytes, pos);
    for (std::uint32_t i = 0; i < nnz; ++i) {
      const auto id = take<std::uint32_t>(bytes, pos);
      if (id >= kFeatureTableSize) throw InputError("feature id out of range");
      h.weights[id] = take<double>(bytes, pos);
    }
    m.set_head(static_cast<Objective>(o), std::move(h));
  }
  if (pos != bytes.size()) throw InputError("trailing bytes in binary model");
  return m;
}

void save_model(const PredictorModel& model, const std::filesystem::path& path, ModelFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model to " + path.string());
  if (format == ModelFormat::binary) out << to_binary(model);
  else out << to_json(model).dump() << '\n';
  if (!out) throw IoError("failed writing model to " + path.string());
}

PredictorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read model from " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.rfind(std::string(kBinaryMagic, sizeof(kBinaryMagic)), 0) == 0) return model_from_binary(bytes);
  try {
    return model_from_json(nlohmann::json::parse(bytes));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("model file is neither binary nor JSON: " + std::string(e.what()));
  }
}

}  // namespace stcrank
