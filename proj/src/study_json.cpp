#include "macml/study_json.hpp"

#include <cstdio>
#include <set>
#include <type_traits>

#include <json.hpp>

#include "macml/error.hpp"

namespace macml {

using nlohmann::json;

namespace {

json to_json_object(const StudyConfig& c, bool with_threads) {
  json j;
  j["kind"] = to_string(c.kind);
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  j["seed"] = c.seed;
  if (with_threads) j["threads"] = c.threads;
  j["L_values"] = c.L_values;
  j["K_values"] = c.K_values;
  j["eta_values"] = c.eta_values;
  j["replications"] = c.replications;
  j["J"] = c.J;
  j["thresholds"] = c.thresholds;
  j["bias_grad_tol"] = c.bias_grad_tol;
  j["big_bias"] = c.big_bias;
  j["datasets"] = c.datasets;
  j["N"] = c.N;
  j["grad_tols"] = c.grad_tols;
  j["max_iter"] = c.max_iter;
  j["clamp_floor"] = c.approx.clamp_floor;
  j["ridge"] = c.approx.ridge;
  j["oracle_tol"] = c.oracle_tol;
  return j;
}

}  // namespace

StudyConfig parse_study_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::InvalidArgument, std::string("study config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::InvalidArgument, "study config must be a JSON object");

  std::vector<std::string> errors;
  StudyConfig c;
  StudyKind kind = StudyKind::Asymptotic;
  Scale scale = Scale::Desk;
  try {
    if (j.contains("kind")) kind = parse_study_kind(j.at("kind").get<std::string>());
    else errors.push_back("missing key 'kind'");
  } catch (const std::exception& e) {
    errors.push_back(std::string("kind: ") + e.what());
  }
  try {
    if (j.contains("scale")) scale = parse_scale(j.at("scale").get<std::string>());
  } catch (const std::exception& e) {
    errors.push_back(std::string("scale: ") + e.what());
  }
  c = default_config(kind, scale);

  static const std::set<std::string> known = {
      "kind",       "scale",     "methods",  "seed",          "threads",  "L_values",  "K_values",
      "eta_values", "replications", "J",     "thresholds",    "bias_grad_tol", "big_bias", "datasets",
      "N",          "grad_tols", "max_iter", "clamp_floor",   "ridge",    "oracle_tol"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) errors.push_back("unknown key '" + key + "'");

  auto get = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    using T = std::decay_t<decltype(dst)>;
    const json& v = j.at(key);
    if constexpr (std::is_integral_v<T>) {
      // get_to would wrap a negative number into an unsigned field.
      const bool ok = std::is_unsigned_v<T> ? v.is_number_unsigned() : v.is_number_integer();
      if (!ok) {
        errors.push_back(std::string(key) + ": expected " +
                         (std::is_unsigned_v<T> ? "a non-negative integer" : "an integer"));
        return;
      }
    }
    try {
      v.get_to(dst);
    } catch (const std::exception& e) {
      errors.push_back(std::string(key) + ": " + e.what());
    }
  };
  if (j.contains("methods")) {
    try {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    } catch (const std::exception& e) {
      errors.push_back(std::string("methods: ") + e.what());
    }
  }
  get("seed", c.seed);
  get("threads", c.threads);
  get("L_values", c.L_values);
  get("K_values", c.K_values);
  get("eta_values", c.eta_values);
  get("replications", c.replications);
  get("J", c.J);
  get("thresholds", c.thresholds);
  get("bias_grad_tol", c.bias_grad_tol);
  get("big_bias", c.big_bias);
  get("datasets", c.datasets);
  get("N", c.N);
  get("grad_tols", c.grad_tols);
  get("max_iter", c.max_iter);
  get("clamp_floor", c.approx.clamp_floor);
  get("ridge", c.approx.ridge);
  get("oracle_tol", c.oracle_tol);

  for (auto& e : validation_errors(c)) errors.push_back(std::move(e));
  if (!errors.empty()) {
    std::string msg = "invalid study config:";
    for (const auto& e : errors) msg += "\n  " + e;
    fail(ErrorKind::InvalidArgument, msg);
  }
  return c;
}

std::string study_config_json(const StudyConfig& cfg, int indent) { return to_json_object(cfg, true).dump(indent); }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const StudyConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json_object(cfg, false).dump())));
  return buf;
}

std::string manifest_json(const StudyConfig& cfg, const std::map<std::string, double>& numbers,
                          const std::map<std::string, std::string>& strings) {
  json m;
  m["version"] = kVersion;
  m["seed"] = cfg.seed;
  m["config_hash"] = config_hash(cfg);
  m["config"] = to_json_object(cfg, true);
  m["build"] = {{"compiler", __VERSION__}, {"cplusplus", __cplusplus}};
  for (const auto& [k, v] : numbers) m["stats"][k] = v;
  for (const auto& [k, v] : strings) m["files"][k] = v;
  return m.dump(2);
}

}  // namespace macml
