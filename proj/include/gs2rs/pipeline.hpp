#pragma once

// Staged end-to-end run: ingest -> extract -> train -> inject -> recommend -> eval,
// plus the threshold sweep. Every stage writes checkpoint files into the output
// directory and records a content key in manifest.json; a stage is skipped when
// its key matches, its outputs exist, it is not forced, and no upstream stage
// re-ran in the same invocation.

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "gs2rs/cgan.hpp"
#include "gs2rs/config.hpp"
#include "gs2rs/fusion.hpp"
#include "gs2rs/metrics.hpp"
#include "gs2rs/preference.hpp"
#include "gs2rs/ratings.hpp"
#include "gs2rs/recommenders.hpp"

namespace gs2rs {

enum class Stage { ingest, extract, train, inject, recommend, eval, sweep };

inline constexpr std::array<std::string_view, 7> kStageNames = {"ingest", "extract",   "train", "inject",
                                                                 "recommend", "eval", "sweep"};

inline std::string_view to_string(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

inline Stage parse_stage(std::string_view s) {
  for (std::size_t k = 0; k < kStageNames.size(); ++k)
    if (kStageNames[k] == s) return static_cast<Stage>(k);
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t hash_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read '" + p.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h = fnv1a64(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline PreferenceMatrix read_preferences_csv(std::istream& in, std::size_t users, std::size_t items, Channel channel) {
  std::vector<PreferenceEntry> entries;
  detail::read_triples(in, [&](Index u, Index i, double v, std::size_t line) {
    if (v != 0.0 && v != 1.0) throw ParseError("preference value must be 0 or 1", line);
    entries.push_back({u, i, static_cast<std::uint8_t>(v)});
  });
  return PreferenceMatrix(users, items, channel, std::move(entries));
}

struct SweepRow {
  MetricsReport report;
  std::size_t injected_zeros = 0;
};

inline void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
  out << kMetricsHeader << ",injected_zeros\n";
  for (const auto& r : rows) out << metrics_csv_row(r.report) << ',' << r.injected_zeros << '\n';
}

// inject -> recommend -> evaluate for each theta (theta_in = theta_sa = theta)
// over fixed fused matrices, so generation is shared across rows.
inline std::vector<SweepRow> threshold_sweep(const SparseRatingMatrix& train, const SparseRatingMatrix& test,
                                             const ItemCatalog& catalog, const FusedPreferenceMatrix& fused_in,
                                             const FusedPreferenceMatrix& fused_sa, const PreferenceMatrix& r_sa,
                                             const FusionConfig& fusion, const RecommendConfig& rec_cfg,
                                             bool side_information, std::span<const double> thetas, std::size_t k,
                                             double cold_t_percent, MetricsReport meta) {
  const auto truth = build_ground_truth(train, test);
  const auto cold = ColdStartSpec::bottom(train, cold_t_percent);
  std::vector<SweepRow> rows;
  for (double theta : thetas) {
    FusionConfig f = fusion;
    f.theta_in = f.theta_sa = theta;
    const auto bundle = apply_thresholds(train, fused_in, fused_sa, f);
    std::optional<SideInformation> side;
    if (side_information)
      side = SideInformation{&bundle.fused_interest, &bundle.fused_satisfaction, &bundle.serendipity, &r_sa};
    const auto recs = recommend(bundle.enhanced, side, rec_cfg);
    meta.theta = theta;
    rows.push_back({evaluate(recs, truth, catalog, cold, k, meta), bundle.enhanced.injected_count()});
    spdlog::info("sweep theta={:.2f}: injected {} zeros, precision {:.4f}", theta, rows.back().injected_zeros,
                 rows.back().report.precision);
  }
  return rows;
}

class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg, std::set<Stage> forced = {}) : cfg_(std::move(cfg)), forced_(std::move(forced)) {
    cfg_.validate();
    std::filesystem::create_directories(cfg_.out_dir);
    const auto mpath = cfg_.out_dir / "manifest.json";
    if (std::filesystem::exists(mpath)) {
      std::ifstream in(mpath);
      try {
        manifest_ = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception&) {
        spdlog::warn("ignoring unreadable manifest {}", mpath.string());
        manifest_ = nlohmann::json::object();
      }
    }
    if (!manifest_.is_object()) manifest_ = nlohmann::json::object();
  }

  void run(Stage target) { ensure(target); }

  const RunConfig& config() const noexcept { return cfg_; }
  const std::filesystem::path& out_dir() const noexcept { return cfg_.out_dir; }
  const std::vector<Stage>& executed() const noexcept { return executed_; }
  std::filesystem::path path(const std::string& name) const { return cfg_.out_dir / name; }

  static std::vector<std::string> outputs_of(Stage s) {
    switch (s) {
      case Stage::ingest: return {"train.snapshot", "test.snapshot", "catalog.csv", "stats.csv"};
      case Stage::extract: return {"r_in.csv", "r_sa.csv"};
      case Stage::train:
        return {"cgan_interest.ckpt", "cgan_satisfaction.ckpt", "loss_interest.csv", "loss_satisfaction.csv"};
      case Stage::inject: return {"rh.csv", "rbar_in.csv", "rbar_sa.csv", "s.csv", "bundle.json"};
      case Stage::recommend: return {"recommendations.csv"};
      case Stage::eval: return {"metrics.csv"};
      case Stage::sweep: return {"sweep.csv"};
    }
    return {};
  }

  static std::vector<Stage> upstream_of(Stage s) {
    switch (s) {
      case Stage::ingest: return {};
      case Stage::extract: return {Stage::ingest};
      case Stage::train: return {Stage::extract};
      case Stage::inject: return {Stage::train};
      case Stage::recommend: return {Stage::inject};
      case Stage::eval: return {Stage::recommend};
      case Stage::sweep: return {Stage::inject};
    }
    return {};
  }

  // Loaded checkpoint artifacts.
  const SparseRatingMatrix& train() { return load(train_, "train.snapshot", [](std::istream& in) { return read_snapshot(in); }); }
  const SparseRatingMatrix& test() { return load(test_, "test.snapshot", [](std::istream& in) { return read_snapshot(in); }); }
  const ItemCatalog& catalog() {
    return load(catalog_, "catalog.csv", [this](std::istream& in) {
      return align_catalog(read_catalog(in, CatalogFormat::csv_categories), train());
    });
  }
  const PreferenceMatrix& r_in() {
    return load(r_in_, "r_in.csv", [this](std::istream& in) {
      return read_preferences_csv(in, train().num_users(), train().num_items(), Channel::interest);
    });
  }
  const PreferenceMatrix& r_sa() {
    return load(r_sa_, "r_sa.csv", [this](std::istream& in) {
      return read_preferences_csv(in, train().num_users(), train().num_items(), Channel::satisfaction);
    });
  }
  const CganChannel& channel_in() {
    return load(ch_in_, "cgan_interest.ckpt", [](std::istream& in) { return read_channel(in); });
  }
  const CganChannel& channel_sa() {
    return load(ch_sa_, "cgan_satisfaction.ckpt", [](std::istream& in) { return read_channel(in); });
  }
  const EnhancedBundle& bundle() {
    if (!bundle_) {
      const auto& r = train();
      const auto M = r.num_users(), N = r.num_items();
      EnhancedBundle b;
      b.enhanced = read_file("rh.csv", [&](std::istream& in) {
        return read_enhanced_csv(in, M, N, r.user_ids(), r.item_ids());
      });
      b.fused_interest = read_file("rbar_in.csv", [&](std::istream& in) {
        return read_fused_csv(in, M, N, Channel::interest);
      });
      b.fused_satisfaction = read_file("rbar_sa.csv", [&](std::istream& in) {
        return read_fused_csv(in, M, N, Channel::satisfaction);
      });
      b.serendipity = read_file("s.csv", [&](std::istream& in) { return read_serendipity_csv(in, M, N); });
      bundle_ = std::move(b);
    }
    return *bundle_;
  }
  const RecommendationList& recommendations() {
    return load(recs_, "recommendations.csv", [this](std::istream& in) {
      return read_recommendations_csv(in, *train().user_ids(), *train().item_ids());
    });
  }

  std::string model_name() const {
    return std::string(to_string(cfg_.recommend.model)) + (cfg_.enhanced ? "+gs2rs" : "");
  }

 private:
  template <typename T, typename Fn>
  const T& load(std::optional<T>& slot, const std::string& name, Fn&& fn) {
    if (!slot) slot = read_file(name, std::forward<Fn>(fn));
    return *slot;
  }

  template <typename Fn>
  auto read_file(const std::string& name, Fn&& fn) -> std::invoke_result_t<Fn, std::istream&> {
    std::ifstream in(path(name));
    if (!in) throw Error("missing checkpoint " + path(name).string());
    return fn(in);
  }

  template <typename Fn>
  void write_file(const std::string& name, Fn&& fn) {
    const auto tmp = path(name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw Error("cannot write " + tmp.string());
      fn(out);
      if (!out) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path(name));
  }

  static std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
  }

  // Canonical description of the configuration each stage depends on.
  std::string stage_config(Stage s) const {
    std::ostringstream o;
    switch (s) {
      case Stage::ingest:
        o << "ratings=" << hex64(hash_file(cfg_.ratings)) << ";fmt=" << int(cfg_.ratings_format)
          << ";catalog=" << (cfg_.catalog.empty() ? std::string("none") : hex64(hash_file(cfg_.catalog)))
          << ";cfmt=" << int(cfg_.catalog_format) << ";sub=" << cfg_.subsample_users << "x" << cfg_.subsample_items
          << ";k=" << cfg_.folds << ";fold=" << cfg_.fold << ";seed=" << cfg_.seed;
        break;
      case Stage::extract: o << "policy=" << to_string(cfg_.satisfaction_threshold); break;
      case Stage::train:
        o << "noise=" << cfg_.arch.noise_dim << ";act=" << nn::to_string(cfg_.arch.hidden_activation) << ";hidden=";
        for (auto h : cfg_.arch.hidden) o << h << ',';
        o << ";lr=" << fmt_double(cfg_.train.learning_rate) << ";batch=" << cfg_.train.batch_size
          << ";epochs=" << cfg_.train.epochs << ";seed=" << cfg_.seed;
        break;
      case Stage::inject:
        o << "t=" << cfg_.fusion.t << ";method=" << to_string(cfg_.fusion.method)
          << ";tin=" << fmt_double(cfg_.fusion.theta_in) << ";tsa=" << fmt_double(cfg_.fusion.theta_sa)
          << ";bin=" << fmt_double(cfg_.fusion.binarize_threshold) << ";seed=" << cfg_.seed;
        break;
      case Stage::recommend:
      case Stage::sweep: {
        const auto& r = cfg_.recommend;
        o << "model=" << to_string(r.model) << ";k=" << r.k << ";enh=" << cfg_.enhanced
          << ";side=" << cfg_.side_information << ";kn=" << r.k_neighbors << ";d=" << r.wmf.factors
          << ";reg=" << fmt_double(r.wmf.reg) << ";wk=" << fmt_double(r.wmf.weight_known)
          << ";wi=" << fmt_double(r.wmf.weight_injected) << ";ep=" << r.wmf.epochs
          << ";boost=" << fmt_double(r.serendipity_boost) << ";mix=" << r.use_preference_mix
          << ";excl=" << r.exclude_injected << ";seed=" << cfg_.seed;
        if (s == Stage::sweep) {
          o << ";evk=" << cfg_.eval_k << ";cold=" << fmt_double(cfg_.cold_t_percent) << ";thetas=";
          for (double t : cfg_.sweep_thetas) o << fmt_double(t) << ',';
        }
        break;
      }
      case Stage::eval: o << "evk=" << cfg_.eval_k << ";cold=" << fmt_double(cfg_.cold_t_percent); break;
    }
    return o.str();
  }

  std::string ensure(Stage s) {
    bool upstream_ran = false;
    std::string key_material = std::string(to_string(s)) + "|" + stage_config(s);
    for (Stage up : upstream_of(s)) {
      key_material += "|" + ensure(up);
      upstream_ran = upstream_ran || std::find(executed_.begin(), executed_.end(), up) != executed_.end();
    }
    const std::string key = hex64(fnv1a64(key_material));
    const std::string name(to_string(s));
    bool outputs_present = true;
    for (const auto& f : outputs_of(s)) outputs_present = outputs_present && std::filesystem::exists(path(f));
    const bool recorded = manifest_.contains(name) && manifest_[name].value("key", "") == key;
    if (std::find(executed_.begin(), executed_.end(), s) != executed_.end()) return key;
    if (!forced_.count(s) && !upstream_ran && recorded && outputs_present) {
      spdlog::info("stage {}: up to date", name);
      return key;
    }
    spdlog::info("stage {}: running", name);
    execute(s);
    executed_.push_back(s);
    manifest_[name] = {{"key", key}, {"outputs", outputs_of(s)}};
    write_file("manifest.json", [this](std::ostream& out) { out << manifest_.dump(2) << '\n'; });
    return key;
  }

  void execute(Stage s) {
    switch (s) {
      case Stage::ingest: return run_ingest();
      case Stage::extract: return run_extract();
      case Stage::train: return run_train();
      case Stage::inject: return run_inject();
      case Stage::recommend: return run_recommend();
      case Stage::eval: return run_eval();
      case Stage::sweep: return run_sweep();
    }
  }

  void run_ingest() {
    std::optional<ItemCatalog> cat;
    if (!cfg_.catalog.empty()) cat = ingest_catalog(cfg_.catalog.string(), cfg_.catalog_format);
    auto full = ingest_ratings(cfg_.ratings.string(), cfg_.ratings_format, cat ? &*cat : nullptr);
    if (cfg_.subsample_users || cfg_.subsample_items)
      full = subsample(full, cfg_.subsample_users ? cfg_.subsample_users : full.num_users(),
                       cfg_.subsample_items ? cfg_.subsample_items : full.num_items(), derive_seed(cfg_.seed, 5));
    const auto stats = dataset_stats(full);
    auto splits = kfold_split(full, cfg_.folds, cfg_.seed);
    auto& split = splits.at(cfg_.fold);
    const ItemCatalog aligned = cat ? align_catalog(*cat, full) : align_catalog(ItemCatalog{}, full);
    write_file("train.snapshot", [&](std::ostream& o) { write_snapshot(split.train, o); });
    write_file("test.snapshot", [&](std::ostream& o) { write_snapshot(split.test, o); });
    write_file("catalog.csv", [&](std::ostream& o) { write_catalog_csv(aligned, o); });
    write_file("stats.csv", [&](std::ostream& o) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.6f\n", stats.users, stats.items, stats.feedbacks, stats.sparsity);
      o << "users,items,feedbacks,sparsity\n" << buf;
    });
    train_ = std::move(split.train);
    test_ = std::move(split.test);
    catalog_ = align_catalog(aligned, *train_);
    r_in_.reset();
    r_sa_.reset();
  }

  void run_extract() {
    r_in_ = extract_interest(train());
    r_sa_ = extract_satisfaction(train(), cfg_.satisfaction_threshold);
    write_file("r_in.csv", [&](std::ostream& o) { write_preferences_csv(*r_in_, o); });
    write_file("r_sa.csv", [&](std::ostream& o) { write_preferences_csv(*r_sa_, o); });
  }

  void run_train() {
    auto train_one = [&](const PreferenceMatrix& p, int tag) {
      const auto rows = build_training_rows(p);
      nn::TrainConfig tc = cfg_.train;
      tc.seed = derive_seed(cfg_.seed, 11, tag);
      return train_channel(rows, tc, cfg_.arch, p.channel());
    };
    auto in = train_one(r_in(), 0);
    auto sa = train_one(r_sa(), 1);
    write_file("cgan_interest.ckpt", [&](std::ostream& o) { write_channel(in.channel, o); });
    write_file("cgan_satisfaction.ckpt", [&](std::ostream& o) { write_channel(sa.channel, o); });
    write_file("loss_interest.csv", [&](std::ostream& o) { write_loss_history(in.history, o); });
    write_file("loss_satisfaction.csv", [&](std::ostream& o) { write_loss_history(sa.history, o); });
    ch_in_ = std::move(in.channel);
    ch_sa_ = std::move(sa.channel);
  }

  void run_inject() {
    const std::uint64_t seed = derive_seed(cfg_.seed, 13);
    auto b = build_enhanced_bundle(train(), r_in(), r_sa(), channel_in(), channel_sa(), cfg_.fusion, seed);
    write_file("rh.csv", [&](std::ostream& o) { write_enhanced_csv(b.enhanced, o); });
    write_file("rbar_in.csv", [&](std::ostream& o) { write_fused_csv(b.fused_interest, o); });
    write_file("rbar_sa.csv", [&](std::ostream& o) { write_fused_csv(b.fused_satisfaction, o); });
    write_file("s.csv", [&](std::ostream& o) { write_serendipity_csv(b.serendipity, o); });
    nlohmann::json m = {
        {"seed", seed},
        {"t", cfg_.fusion.t},
        {"theta_in", cfg_.fusion.theta_in},
        {"theta_sa", cfg_.fusion.theta_sa},
        {"fusion_method", std::string(to_string(cfg_.fusion.method))},
        {"binarize_threshold", cfg_.fusion.binarize_threshold},
        {"checkpoints",
         {{"interest", hex64(hash_file(path("cgan_interest.ckpt")))},
          {"satisfaction", hex64(hash_file(path("cgan_satisfaction.ckpt")))}}},
        {"injected_zeros", b.enhanced.injected_count()},
        {"unknown_cells_before", train().num_users() * train().num_items() - train().size()},
        {"unknown_cells_after", b.enhanced.unknown_count()},
        {"serendipity_cells", b.serendipity.count()},
    };
    write_file("bundle.json", [&](std::ostream& o) { o << m.dump(2) << '\n'; });
    spdlog::info("inject: {} zeros injected, unknown cells {} -> {}", b.enhanced.injected_count(),
                 m["unknown_cells_before"].get<std::size_t>(), b.enhanced.unknown_count());
    bundle_ = std::move(b);
  }

  RecommendConfig recommend_config() const {
    RecommendConfig rc = cfg_.recommend;
    rc.wmf.seed = derive_seed(cfg_.seed, 17);
    return rc;
  }

  void run_recommend() {
    const auto& b = bundle();
    const EnhancedMatrix input = cfg_.enhanced ? b.enhanced : EnhancedMatrix::from_ratings(train());
    std::optional<SideInformation> side;
    if (cfg_.side_information)
      side = SideInformation{&b.fused_interest, &b.fused_satisfaction, &b.serendipity, &r_sa()};
    auto recs = recommend(input, side, recommend_config());
    write_file("recommendations.csv", [&](std::ostream& o) {
      write_recommendations_csv(recs, *train().user_ids(), *train().item_ids(), &b.serendipity, o);
    });
    // Reload so downstream stages see exactly what the checkpoint holds.
    recs_.reset();
  }

  MetricsReport meta() const {
    MetricsReport m;
    m.model = model_name();
    m.theta = cfg_.fusion.theta_in;
    m.t = cfg_.fusion.t;
    m.seed = cfg_.seed;
    return m;
  }

  void run_eval() {
    const auto truth = build_ground_truth(train(), test());
    const auto cold = ColdStartSpec::bottom(train(), cfg_.cold_t_percent);
    const auto report = evaluate(recommendations(), truth, catalog(), cold, cfg_.eval_k, meta());
    write_file("metrics.csv", [&](std::ostream& o) { write_metrics_csv(std::span(&report, 1), o); });
    spdlog::info("eval: {}", metrics_csv_row(report));
  }

  void run_sweep() {
    const auto& b = bundle();
    auto m = meta();
    m.model = std::string(to_string(cfg_.recommend.model)) + "+gs2rs";
    const auto rows = threshold_sweep(train(), test(), catalog(), b.fused_interest, b.fused_satisfaction, r_sa(),
                                      cfg_.fusion, recommend_config(), cfg_.side_information, cfg_.sweep_thetas,
                                      cfg_.eval_k, cfg_.cold_t_percent, m);
    write_file("sweep.csv", [&](std::ostream& o) { write_sweep_csv(rows, o); });
  }

  RunConfig cfg_;
  std::set<Stage> forced_;
  nlohmann::json manifest_;
  std::vector<Stage> executed_;

  std::optional<SparseRatingMatrix> train_, test_;
  std::optional<ItemCatalog> catalog_;
  std::optional<PreferenceMatrix> r_in_, r_sa_;
  std::optional<CganChannel> ch_in_, ch_sa_;
  std::optional<EnhancedBundle> bundle_;
  std::optional<RecommendationList> recs_;
};

}  // namespace gs2rs
