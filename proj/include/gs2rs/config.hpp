#pragma once

// Run configuration: an INI file with fixed sections and keys. Unknown keys are
// rejected so typos fail before any work starts.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gs2rs/cgan.hpp"
#include "gs2rs/errors.hpp"
#include "gs2rs/fusion.hpp"
#include "gs2rs/nn.hpp"
#include "gs2rs/preference.hpp"
#include "gs2rs/ratings.hpp"
#include "gs2rs/recommenders.hpp"

namespace gs2rs {

struct RunConfig {
  // [data]
  std::filesystem::path ratings;
  RatingsFormat ratings_format = RatingsFormat::movielens_dat;
  std::filesystem::path catalog;
  CatalogFormat catalog_format = CatalogFormat::movielens_item;
  std::size_t subsample_users = 0;  // 0 keeps everything
  std::size_t subsample_items = 0;
  // [split]
  std::size_t folds = 5;
  std::size_t fold = 0;
  // [run]
  std::uint64_t seed = 42;
  std::filesystem::path out_dir = "gs2rs-out";
  // [preference]
  ThresholdPolicy satisfaction_threshold;
  // [gan]
  CganArchitecture arch;
  nn::TrainConfig train;
  // [fusion]
  FusionConfig fusion;
  // [recommender]
  RecommendConfig recommend;
  bool enhanced = true;
  bool side_information = true;
  // [eval]
  std::size_t eval_k = 10;
  double cold_t_percent = 0.1;
  std::vector<double> sweep_thetas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

  void validate() const {
    if (ratings.empty()) throw ConfigError("data.ratings is required");
    if (!std::filesystem::exists(ratings)) throw ConfigError("ratings file not found: " + ratings.string());
    if (!catalog.empty() && !std::filesystem::exists(catalog))
      throw ConfigError("catalog file not found: " + catalog.string());
    if (folds < 2) throw ConfigError("split.k must be >= 2");
    if (fold >= folds) throw ConfigError("split.fold must be < split.k");
    try {
      train.validate();
      fusion.validate();
      recommend.wmf.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
    if (arch.noise_dim == 0) throw ConfigError("gan.noise_dim must be positive");
    for (auto h : arch.hidden)
      if (h == 0) throw ConfigError("gan.hidden sizes must be positive");
    if (eval_k < 1) throw ConfigError("eval.k must be >= 1");
    if (recommend.k < eval_k) throw ConfigError("recommendation list shorter than eval.k");
    if (!(cold_t_percent > 0.0 && cold_t_percent <= 1.0)) throw ConfigError("eval.cold_t_percent must lie in (0, 1]");
    for (double t : sweep_thetas)
      if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("eval.sweep_thetas values must lie in [0, 1]");
    if (recommend.serendipity_boost < 0) throw ConfigError("recommender.serendipity_boost must be >= 0");
  }
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"data", {"ratings", "ratings_format", "catalog", "catalog_format", "subsample_users", "subsample_items"}},
      {"split", {"k", "fold"}},
      {"run", {"seed", "out_dir"}},
      {"preference", {"satisfaction_threshold"}},
      {"gan", {"noise_dim", "hidden", "activation", "learning_rate", "batch_size", "epochs"}},
      {"fusion", {"t", "theta_in", "theta_sa", "theta", "method", "binarize_threshold"}},
      {"recommender",
       {"model", "k", "enhanced", "side_information", "k_neighbors", "factors", "reg", "weight_known",
        "weight_injected", "epochs", "serendipity_boost", "preference_mix", "exclude_injected"}},
      {"eval", {"k", "cold_t_percent", "sweep_thetas"}},
  };
  return schema;
}

template <typename T>
T config_number(const std::string& key, const std::string& text) {
  auto v = parse_number<T>(text);
  if (!v) throw ConfigError("bad value for " + key + ": '" + text + "'");
  return *v;
}

inline bool config_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + text + "'");
}

template <typename T>
std::vector<T> config_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (auto part : split(text, ",")) out.push_back(config_number<T>(key, std::string(trim(part))));
  return out;
}

}  // namespace detail

// Relative paths resolve against `base_dir` (the config file's directory).
inline RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  const auto& schema = detail::config_schema();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  for (const auto& [section, body] : tree) {
    auto sit = schema.find(section);
    if (sit == schema.end() || body.empty())
      throw ConfigError("unknown config section or top-level key '" + section + "'");
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      if (!sit->second.count(key)) throw ConfigError("unknown config key '" + full + "'");
      const std::string v(detail::trim(node.get_value<std::string>()));
      using detail::config_bool;
      using detail::config_number;
      if (full == "data.ratings") c.ratings = resolve(v);
      else if (full == "data.ratings_format") c.ratings_format = parse_ratings_format(v);
      else if (full == "data.catalog") c.catalog = v.empty() ? std::filesystem::path{} : resolve(v);
      else if (full == "data.catalog_format") c.catalog_format = parse_catalog_format(v);
      else if (full == "data.subsample_users") c.subsample_users = config_number<std::size_t>(full, v);
      else if (full == "data.subsample_items") c.subsample_items = config_number<std::size_t>(full, v);
      else if (full == "split.k") c.folds = config_number<std::size_t>(full, v);
      else if (full == "split.fold") c.fold = config_number<std::size_t>(full, v);
      else if (full == "run.seed") c.seed = config_number<std::uint64_t>(full, v);
      else if (full == "run.out_dir") c.out_dir = resolve(v);
      else if (full == "preference.satisfaction_threshold") c.satisfaction_threshold = parse_threshold_policy(v);
      else if (full == "gan.noise_dim") c.arch.noise_dim = config_number<std::size_t>(full, v);
      else if (full == "gan.hidden") c.arch.hidden = detail::config_list<std::size_t>(full, v);
      else if (full == "gan.activation") c.arch.hidden_activation = nn::parse_activation(v);
      else if (full == "gan.learning_rate") c.train.learning_rate = config_number<double>(full, v);
      else if (full == "gan.batch_size") c.train.batch_size = config_number<std::size_t>(full, v);
      else if (full == "gan.epochs") c.train.epochs = config_number<std::size_t>(full, v);
      else if (full == "fusion.t") c.fusion.t = config_number<std::size_t>(full, v);
      else if (full == "fusion.theta") c.fusion.theta_in = c.fusion.theta_sa = config_number<double>(full, v);
      else if (full == "fusion.theta_in") c.fusion.theta_in = config_number<double>(full, v);
      else if (full == "fusion.theta_sa") c.fusion.theta_sa = config_number<double>(full, v);
      else if (full == "fusion.method") c.fusion.method = parse_fusion_method(v);
      else if (full == "fusion.binarize_threshold") c.fusion.binarize_threshold = config_number<double>(full, v);
      else if (full == "recommender.model") c.recommend.model = parse_model_kind(v);
      else if (full == "recommender.k") c.recommend.k = config_number<std::size_t>(full, v);
      else if (full == "recommender.enhanced") c.enhanced = config_bool(full, v);
      else if (full == "recommender.side_information") c.side_information = config_bool(full, v);
      else if (full == "recommender.k_neighbors") c.recommend.k_neighbors = config_number<std::size_t>(full, v);
      else if (full == "recommender.factors") c.recommend.wmf.factors = config_number<std::size_t>(full, v);
      else if (full == "recommender.reg") c.recommend.wmf.reg = config_number<double>(full, v);
      else if (full == "recommender.weight_known") c.recommend.wmf.weight_known = config_number<double>(full, v);
      else if (full == "recommender.weight_injected") c.recommend.wmf.weight_injected = config_number<double>(full, v);
      else if (full == "recommender.epochs") c.recommend.wmf.epochs = config_number<std::size_t>(full, v);
      else if (full == "recommender.serendipity_boost") c.recommend.serendipity_boost = config_number<double>(full, v);
      else if (full == "recommender.preference_mix") c.recommend.use_preference_mix = config_bool(full, v);
      else if (full == "recommender.exclude_injected") c.recommend.exclude_injected = config_bool(full, v);
      else if (full == "eval.k") c.eval_k = config_number<std::size_t>(full, v);
      else if (full == "eval.cold_t_percent") c.cold_t_percent = config_number<double>(full, v);
      else if (full == "eval.sweep_thetas") c.sweep_thetas = detail::config_list<double>(full, v);
    }
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_run_config(in, path.parent_path());
}

}  // namespace gs2rs
