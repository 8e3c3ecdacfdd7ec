#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ottrim/ottrim.hpp"

namespace ottrim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

namespace detail {

// Run-config flags shared by compress, score and bench. Values land in
// `flags`; only options given on the command line override a --config file.
struct RunFlags {
  RunConfig flags;
  std::string transport_mode = to_string(RunConfig{}.transport_mode);
  std::string spatial_operator = to_string(RunConfig{}.spatial_operator);
  std::string config_path;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> bindings;

  void attach(CLI::App* app) {
    auto bind = [&](CLI::Option* opt, std::function<void(RunConfig&)> apply) {
      bindings.emplace_back(opt, std::move(apply));
    };
    bind(app->add_option("--epsilon-ot", flags.epsilon_ot, "Entropic regularization strength")
             ->capture_default_str(),
         [this](RunConfig& c) { c.epsilon_ot = flags.epsilon_ot; });
    bind(app->add_option("--c-birth", flags.c_birth, "Cost of routing mass from the slack source")
             ->capture_default_str(),
         [this](RunConfig& c) { c.c_birth = flags.c_birth; });
    bind(app->add_option("--c-death", flags.c_death, "Cost of routing mass to the slack target")
             ->capture_default_str(),
         [this](RunConfig& c) { c.c_death = flags.c_death; });
    bind(app->add_option("--sinkhorn-iters", flags.sinkhorn_iters, "Sinkhorn sweeps per frame pair")
             ->capture_default_str(),
         [this](RunConfig& c) { c.sinkhorn_iters = flags.sinkhorn_iters; });
    bind(app->add_option("--lambda-birth", flags.lambda_birth, "Weight of birth evidence")
             ->capture_default_str(),
         [this](RunConfig& c) { c.lambda_birth = flags.lambda_birth; });
    bind(app->add_option("--eta-forensic", flags.eta_forensic, "Weight of the high-frequency prior")
             ->capture_default_str(),
         [this](RunConfig& c) { c.eta_forensic = flags.eta_forensic; });
    bind(app->add_option("--ratio", flags.ratio, "Retention ratio in (0,1]")->capture_default_str(),
         [this](RunConfig& c) { c.ratio = flags.ratio; });
    bind(app->add_option("--epsilon-norm", flags.epsilon_norm, "Normalization stabilizer")
             ->capture_default_str(),
         [this](RunConfig& c) { c.epsilon_norm = flags.epsilon_norm; });
    bind(app->add_option("--transport-mode", transport_mode,
                         "hard_assignment | balanced_ot | only_birth | birth_death")
             ->capture_default_str(),
         [this](RunConfig& c) { c.transport_mode = parse_transport_mode(transport_mode); });
    bind(app->add_option("--spatial-operator", spatial_operator,
                         "none | patch_variance | sobel | laplacian")
             ->capture_default_str(),
         [this](RunConfig& c) { c.spatial_operator = parse_spatial_operator(spatial_operator); });
    bind(app->add_option("--seed", flags.seed, "Random seed")->capture_default_str(),
         [this](RunConfig& c) { c.seed = flags.seed; });
    app->add_option("--config", config_path,
                    "JSON config, or a previous report embedding one; explicit flags override it");
  }

  RunConfig resolve(std::optional<GridShape>* grid = nullptr) const {
    RunConfig c;
    if (!config_path.empty()) {
      nlohmann::json j = load_json(config_path);
      if (j.contains("config")) j = j.at("config");
      from_json(j, c);
      if (grid && j.contains("grid_rows") && j.contains("grid_cols"))
        *grid = GridShape{j.at("grid_rows").get<Index>(), j.at("grid_cols").get<Index>()};
    }
    for (const auto& [opt, apply] : bindings)
      if (opt->count() > 0) apply(c);
    c.validate();
    return c;
  }
};

struct InputFlags {
  std::string tokens;
  std::string frames;
  std::string projector_weight;
  std::string projector_bias;
  Index grid_rows = 0;
  Index grid_cols = 0;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--tokens", tokens, "Token tensor (NPY, shape T x N x D)")->required();
    app->add_option("--frames", frames,
                    "Directory of frames (sorted *.pgm / *.npy) or comma-separated list; "
                    "omitted means zero prior");
    app->add_option("--projector-weight", projector_weight, "Projector weight (2-D NPY)");
    app->add_option("--projector-bias", projector_bias, "Projector bias (1-D NPY)");
    app->add_option("--grid-rows", grid_rows, "Patch grid rows (0: square grid)")->capture_default_str();
    app->add_option("--grid-cols", grid_cols, "Patch grid columns (0: square grid)")->capture_default_str();
    app->add_option("--out", out, "Output JSON path (stdout when omitted)");
  }
};

inline std::vector<std::filesystem::path> frame_paths(const std::string& arg) {
  namespace fs = std::filesystem;
  std::vector<fs::path> paths;
  if (fs::is_directory(arg)) {
    for (const auto& entry : fs::directory_iterator(arg)) {
      const auto ext = entry.path().extension().string();
      if (entry.is_regular_file() && (ext == ".pgm" || ext == ".npy")) paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw IoError("no .pgm or .npy frames in '" + arg + "'");
    return paths;
  }
  std::stringstream ss(arg);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) paths.emplace_back(item);
  return paths;
}

inline Projector load_projector_flags(const InputFlags& in) {
  if (in.projector_weight.empty()) {
    if (!in.projector_bias.empty()) throw ConfigError("--projector-bias needs --projector-weight");
    return {};
  }
  std::optional<std::filesystem::path> bias;
  if (!in.projector_bias.empty()) bias = in.projector_bias;
  return load_projector(in.projector_weight, bias);
}

inline std::optional<GridShape> grid_flags(Index rows, Index cols) {
  if (rows == 0 && cols == 0) return std::nullopt;
  if (rows < 1 || cols < 1) throw ConfigError("--grid-rows and --grid-cols must be given together");
  return GridShape{rows, cols};
}

inline void emit(const nlohmann::json& j, const std::string& out_path, std::ostream& out) {
  const std::string text = to_canonical_json(j);
  if (out_path.empty())
    out << text;
  else
    ottrim::detail::write_file(out_path, text);
}

inline std::vector<double> parse_real_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + item + "' in list");
    }
  }
  return v;
}

inline std::vector<Index> parse_index_list(const std::string& s) {
  std::vector<Index> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    Index x = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
    if (ec != std::errc() || ptr != item.data() + item.size())
      throw ConfigError("bad index '" + item + "' in list");
    v.push_back(x);
  }
  return v;
}

inline std::string single_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace detail

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using namespace detail;
  CLI::App app{"Transport-novelty visual token compression"};
  app.require_subcommand(1);

  // compress / score
  RunFlags compress_run, score_run;
  InputFlags compress_in, score_in;
  auto* compress_cmd = app.add_subcommand("compress", "Score tokens and keep the top K per frame");
  compress_run.attach(compress_cmd);
  compress_in.attach(compress_cmd);
  auto* score_cmd = app.add_subcommand("score", "Emit per-token scores without selection");
  score_run.attach(score_cmd);
  score_in.attach(score_cmd);

  // prior
  std::string prior_frame, prior_out;
  std::string prior_op = to_string(RunConfig{}.spatial_operator);
  Index prior_rows = 0, prior_cols = 0;
  auto* prior_cmd = app.add_subcommand("prior", "Emit the patch prior of one frame");
  prior_cmd->add_option("--frame", prior_frame, "Frame (binary PGM or 2-D NPY)")->required();
  prior_cmd->add_option("--grid-rows", prior_rows, "Patch grid rows")->required();
  prior_cmd->add_option("--grid-cols", prior_cols, "Patch grid columns")->required();
  prior_cmd->add_option("--spatial-operator", prior_op, "none | patch_variance | sobel | laplacian")
      ->capture_default_str();
  prior_cmd->add_option("--out", prior_out, "Output JSON path (stdout when omitted)");

  // flops
  ModelDims dims{32, 4096, 11008};
  SequenceBudget budget{32, 32, 8, 576, std::nullopt};
  std::uint64_t flops_n = 0, flops_kept = 0, flops_iters = 20;
  double flops_ratio = 0.0;
  std::string flops_out;
  auto* flops_cmd = app.add_subcommand("flops", "Analytical prefill cost before and after pruning");
  flops_cmd->add_option("--layers", dims.layers, "Transformer layers")->capture_default_str();
  flops_cmd->add_option("--hidden", dims.hidden, "Hidden size d")->capture_default_str();
  flops_cmd->add_option("--ffn", dims.ffn, "FFN intermediate size m")->capture_default_str();
  auto* n_opt = flops_cmd->add_option("--n", flops_n, "Print FLOPs for this sequence length only");
  flops_cmd->add_option("--n-sys", budget.n_sys, "System-prompt tokens")->capture_default_str();
  flops_cmd->add_option("--n-txt", budget.n_txt, "User-text tokens")->capture_default_str();
  flops_cmd->add_option("--num-frames", budget.frames, "Frames T")->capture_default_str();
  flops_cmd->add_option("--tokens-per-frame", budget.tokens_per_frame, "Patch tokens per frame N")
      ->capture_default_str();
  auto* kept_opt = flops_cmd->add_option("--kept", flops_kept, "Retained patch tokens per frame K");
  auto* fratio_opt =
      flops_cmd->add_option("--ratio", flops_ratio, "Retention ratio; K = max(1, floor(ratio*N))");
  kept_opt->excludes(fratio_opt);
  flops_cmd->add_option("--sinkhorn-iters", flops_iters, "Sinkhorn sweeps per frame pair")
      ->capture_default_str();
  flops_cmd->add_option("--out", flops_out, "Output JSON path (stdout when omitted)");

  // bench
  RunFlags bench_run;
  SynthConfig synth;
  std::size_t trials = 100;
  std::string ratios_text = "0.05,0.1,0.25,0.5,1.0";
  std::string artifact_frames_text;
  std::string bench_out;
  auto* bench_cmd = app.add_subcommand("bench", "Synthetic forged-vs-pristine benchmark");
  bench_run.attach(bench_cmd);
  bench_cmd->add_option("--num-frames", synth.frames, "Frames T")->capture_default_str();
  bench_cmd->add_option("--tokens-per-frame", synth.tokens, "Tokens per frame N")->capture_default_str();
  bench_cmd->add_option("--dim", synth.dim, "Embedding dim D")->capture_default_str();
  bench_cmd->add_option("--drift-sigma", synth.drift_sigma, "Per-step drift scale")->capture_default_str();
  bench_cmd->add_option("--artifact-count", synth.artifact_count, "Artifacts per artifact frame")
      ->capture_default_str();
  bench_cmd->add_option("--artifact-frames", artifact_frames_text,
                        "Comma-separated artifact frames (default: one random frame)");
  bench_cmd->add_option("--trials", trials, "Forged/pristine pairs")->capture_default_str();
  bench_cmd->add_option("--ratios", ratios_text, "Comma-separated retention ratios")->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "Output JSON path (stdout when omitted)");

  // oracle-check
  OracleCheckOptions oracle;
  double tolerance = 0.01;
  auto* oracle_cmd =
      app.add_subcommand("oracle-check", "Compare Sinkhorn objectives with the exact optimum");
  oracle_cmd->add_option("--instances", oracle.instances, "Random instances")->capture_default_str();
  oracle_cmd->add_option("--min-n", oracle.min_tokens, "Smallest N")->capture_default_str();
  oracle_cmd->add_option("--max-n", oracle.max_tokens, "Largest N (<= 6)")->capture_default_str();
  oracle_cmd->add_option("--epsilon-ot", oracle.epsilon_ot, "Entropic strength")->capture_default_str();
  oracle_cmd->add_option("--sinkhorn-iters", oracle.sinkhorn_iters, "Sinkhorn sweeps")->capture_default_str();
  oracle_cmd->add_option("--seed", oracle.seed, "Random seed")->capture_default_str();
  oracle_cmd->add_option("--tolerance", tolerance, "Maximum allowed relative gap")->capture_default_str();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "error: " << single_line(e.what()) << "\n";
      return kExitValidation;
    }

    if (compress_cmd->parsed() || score_cmd->parsed()) {
      const bool is_compress = compress_cmd->parsed();
      const RunFlags& rf = is_compress ? compress_run : score_run;
      const InputFlags& in = is_compress ? compress_in : score_in;
      std::optional<GridShape> grid;
      const RunConfig cfg = rf.resolve(&grid);
      if (auto g = grid_flags(in.grid_rows, in.grid_cols)) grid = g;
      const TokenTensor tokens = load_token_tensor(in.tokens);
      std::vector<ImageFrame> frames;
      if (!in.frames.empty())
        for (const auto& p : frame_paths(in.frames)) frames.push_back(load_frame(p));
      else
        grid.reset();
      const Projector projector = load_projector_flags(in);
      if (is_compress) {
        const auto result = compress(tokens, frames, cfg, projector, grid);
        emit(nlohmann::json(result), in.out, out);
      } else {
        ScoreReport report{cfg, std::nullopt, score_tokens(tokens, frames, cfg, projector, grid)};
        if (!frames.empty()) report.grid = grid ? *grid : ottrim::detail::square_grid(tokens.tokens_per_frame());
        emit(nlohmann::json(report), in.out, out);
      }
      return kExitOk;
    }

    if (prior_cmd->parsed()) {
      const ImageFrame frame = load_frame(prior_frame);
      const PatchPrior prior =
          prior_variant(parse_spatial_operator(prior_op), frame, GridShape{prior_rows, prior_cols});
      nlohmann::json j = prior;
      j["spatial_operator"] = prior_op;
      emit(j, prior_out, out);
      return kExitOk;
    }

    if (flops_cmd->parsed()) {
      if (n_opt->count() > 0) {
        out << to_decimal(transformer_flops(dims, flops_n)) << "\n";
        return kExitOk;
      }
      if (kept_opt->count() > 0)
        budget.kept = flops_kept;
      else if (fratio_opt->count() > 0)
        budget.kept = static_cast<std::uint64_t>(
            retained_count(static_cast<Index>(budget.tokens_per_frame), flops_ratio));
      else
        budget.kept = static_cast<std::uint64_t>(
            retained_count(static_cast<Index>(budget.tokens_per_frame), RunConfig{}.ratio));
      emit(nlohmann::json(reduction_report(dims, budget, flops_iters)), flops_out, out);
      return kExitOk;
    }

    if (bench_cmd->parsed()) {
      const RunConfig cfg = bench_run.resolve();
      synth.seed = cfg.seed;
      if (!artifact_frames_text.empty())
        synth.artifact_frames = parse_index_list(artifact_frames_text);
      const auto report = run_bench(synth, cfg, trials, parse_real_list(ratios_text));
      emit(nlohmann::json(report), bench_out, out);
      return kExitOk;
    }

    if (oracle_cmd->parsed()) {
      const auto result = run_oracle_check(oracle);
      out << "instances=" << result.instances << " max_relative_gap=" << result.max_relative_gap
          << " mean_relative_gap=" << result.mean_relative_gap << "\n";
      if (result.max_relative_gap > tolerance) {
        err << "error: max relative gap " << result.max_relative_gap << " exceeds tolerance "
            << tolerance << "\n";
        return kExitValidation;
      }
      return kExitOk;
    }
  } catch (const IoError& e) {
    err << "error: " << single_line(e.what()) << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << single_line(e.what()) << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace ottrim::cli
