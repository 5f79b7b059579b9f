#include <algorithm>
#include <cmath>
#include <set>

#include "selbias/simulator.hpp"

namespace selbias {

double BiasModel::position_weight(int position) const {
  const auto it = position_weights.find(position);
  return it == position_weights.end() ? 1.0 : it->second;
}

double BiasModel::identity_weight(const std::string& label) const {
  const auto it = identity_weights.find(label);
  return it == identity_weights.end() ? 1.0 : it->second;
}

double BiasModel::effective_primacy(Pipeline pipeline) const {
  const double load = pipeline == Pipeline::direct ? direct_load_multiplier : 1.0;
  return std::clamp(primacy_rate * load, 0.0, 1.0);
}

double BiasModel::effective_miscount(Pipeline pipeline) const {
  const double load = pipeline == Pipeline::direct ? direct_load_multiplier : 1.0;
  return std::clamp(miscount_rate * load, 0.0, 1.0);
}

namespace {

void check_rate(double value, const char* field) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw std::invalid_argument(std::string(field) + ": must lie in [0, 1]");
  }
}

}  // namespace

void BiasModel::validate() const {
  check_rate(primacy_rate, "primacy_rate");
  check_rate(hallucination_rate, "hallucination_rate");
  check_rate(miscount_rate, "miscount_rate");
  if (!(direct_load_multiplier >= 0.0) || !std::isfinite(direct_load_multiplier)) {
    throw std::invalid_argument("direct_load_multiplier: must be a finite value >= 0");
  }
  // Zero weights are allowed: they exclude an object or position outright.
  for (const auto& [position, w] : position_weights) {
    if (position < 1 || position > kPoolSize) {
      throw std::invalid_argument("position_weights[" + std::to_string(position) +
                                  "]: position outside 1..26");
    }
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("position_weights[" + std::to_string(position) +
                                  "]: weight must be finite and >= 0");
    }
  }
  for (const auto& [label, w] : identity_weights) {
    if (label.empty()) throw std::invalid_argument("identity_weights: empty label");
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("identity_weights." + label + ": weight must be finite and >= 0");
    }
  }
}

namespace {

double number_at(const Json& j, const std::string& path) {
  if (!j.is_number()) throw std::invalid_argument(path + ": expected a number");
  return j.get<double>();
}

}  // namespace

BiasModel bias_model_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("bias model: expected a JSON object");
  static const std::set<std::string> known{"primacy_rate",       "position_weights",
                                           "identity_weights",   "hallucination_rate",
                                           "miscount_rate",      "direct_load_multiplier",
                                           "description"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument(key + ": unknown field");
  }

  BiasModel model;
  if (j.contains("primacy_rate")) model.primacy_rate = number_at(j["primacy_rate"], "primacy_rate");
  if (j.contains("hallucination_rate")) {
    model.hallucination_rate = number_at(j["hallucination_rate"], "hallucination_rate");
  }
  if (j.contains("miscount_rate")) {
    model.miscount_rate = number_at(j["miscount_rate"], "miscount_rate");
  }
  if (j.contains("direct_load_multiplier")) {
    model.direct_load_multiplier =
        number_at(j["direct_load_multiplier"], "direct_load_multiplier");
  }

  if (j.contains("position_weights")) {
    const auto& pw = j["position_weights"];
    if (pw.is_array()) {
      // array form: element i weighs position i+1
      for (std::size_t i = 0; i < pw.size(); ++i) {
        model.position_weights[static_cast<int>(i) + 1] =
            number_at(pw[i], "position_weights[" + std::to_string(i) + "]");
      }
    } else if (pw.is_object()) {
      for (const auto& [key, value] : pw.items()) {
        int position = 0;
        try {
          std::size_t used = 0;
          position = std::stoi(key, &used);
          if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
          throw std::invalid_argument("position_weights." + key + ": key is not a position");
        }
        model.position_weights[position] = number_at(value, "position_weights." + key);
      }
    } else {
      throw std::invalid_argument("position_weights: expected an array or object");
    }
  }

  if (j.contains("identity_weights")) {
    const auto& iw = j["identity_weights"];
    if (!iw.is_object()) throw std::invalid_argument("identity_weights: expected an object");
    for (const auto& [label, value] : iw.items()) {
      model.identity_weights[label] = number_at(value, "identity_weights." + label);
    }
  }

  model.validate();
  return model;
}

Json to_json(const BiasModel& model) {
  Json pw = Json::object();
  for (const auto& [p, w] : model.position_weights) pw[std::to_string(p)] = w;
  return Json{{"primacy_rate", model.primacy_rate},
              {"position_weights", pw},
              {"identity_weights", model.identity_weights},
              {"hallucination_rate", model.hallucination_rate},
              {"miscount_rate", model.miscount_rate},
              {"direct_load_multiplier", model.direct_load_multiplier}};
}

}  // namespace selbias
