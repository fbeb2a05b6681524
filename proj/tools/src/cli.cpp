#include "wfn/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <ostream>
#include <random>

#include "wfn/config.hpp"
#include "wfn/metrics.hpp"
#include "wfn/verify.hpp"

namespace wfn {
namespace {

namespace fs = std::filesystem;

std::pair<double, double> parse_range(const std::string& flag, const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw ConfigError(flag + " must look like a..b, got '" + text + "'");
  const double lo = parse_double(flag, text.substr(0, dots));
  const double hi = parse_double(flag, text.substr(dots + 2));
  if (hi < lo) throw ConfigError(flag + " has min > max");
  return {lo, hi};
}

std::pair<std::int64_t, std::int64_t> parse_size(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw ConfigError("--size must look like HxW, got '" + text + "'");
  return {parse_int("--size", text.substr(0, x)), parse_int("--size", text.substr(x + 1))};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

struct SynthArgs {
  std::string out;
  std::int64_t count = 4;
  std::string size = "64x64";
  std::string depth = "ramp";
  std::string beta_range = "0.5..1.5";
  std::string airlight_range = "0.6..1.0";
  std::uint64_t seed = 0;
  std::int64_t multiple = 0;
};

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthSpec spec;
  std::tie(spec.height, spec.width) = parse_size(a.size);
  const std::int64_t multiple = a.multiple > 0 ? a.multiple : NetworkConfig{}.required_multiple();
  if (spec.height < 1 || spec.width < 1 || spec.height % multiple != 0 || spec.width % multiple != 0) {
    throw ConfigError("--size " + a.size + " must be positive multiples of " + std::to_string(multiple) +
                      " (set --multiple for other network configs)");
  }
  spec.depth = parse_depth_kind(a.depth);
  std::tie(spec.beta_min, spec.beta_max) = parse_range("--beta-range", a.beta_range);
  std::tie(spec.airlight_min, spec.airlight_max) = parse_range("--airlight-range", a.airlight_range);
  spec.validate();
  if (a.count < 1) throw ConfigError("--count must be positive");

  fs::create_directories(a.out);
  std::vector<fs::path> written;
  try {
    std::mt19937_64 rng(a.seed);
    std::string manifest = "# id beta airlight_r airlight_g airlight_b depth pair_seed\n";
    for (std::int64_t i = 0; i < a.count; ++i) {
      char id[24];
      std::snprintf(id, sizeof id, "%04lld", static_cast<long long>(i));
      const std::uint64_t pair_seed = rng();
      const SynthResult r = synth_pair(id, spec, pair_seed);
      for (const auto& [img, suffix] : {std::pair{&r.pair.hazy, "_hazy.ppm"}, std::pair{&r.pair.clean, "_gt.ppm"}}) {
        const fs::path p = fs::path(a.out) / (std::string(id) + suffix);
        written.push_back(p);
        save_ppm(*img, p);
      }
      manifest += std::string(id) + " " + format_double(r.params.beta) + " " + format_double(r.params.airlight[0]) +
                  " " + format_double(r.params.airlight[1]) + " " + format_double(r.params.airlight[2]) + " " +
                  std::string(depth_kind_name(spec.depth)) + " " + std::to_string(pair_seed) + "\n";
    }
    const fs::path mp = fs::path(a.out) / "manifest.txt";
    written.push_back(mp);
    write_text(mp, manifest);
  } catch (...) {
    for (const auto& p : written) fs::remove(p);
    throw;
  }
  out << "wrote " << a.count << " pairs to " << a.out << "\n";
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string ablate;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  if (!a.data.empty()) rc.data_dir = a.data;
  if (!a.out.empty()) rc.out_dir = a.out;
  if (!a.ablate.empty()) rc.network = apply_ablation(rc.network, parse_ablation(a.ablate));
  if (rc.data_dir.empty()) throw ConfigError("no data directory (use --data or data_dir)");
  if (rc.out_dir.empty()) throw ConfigError("no output directory (use --out or out_dir)");
  rc.validate();

  const fs::path out_dir = rc.out_dir;
  fs::create_directories(out_dir);
  fs::remove(out_dir / "FAILED");
  write_text(out_dir / "config.resolved", rc.format());
  try {
    const std::vector<ImagePair> data = load_paired_directory(rc.data_dir);
    Model model = Model::build(rc.network, rc.train.seed);
    TrainConfig tc = rc.train;
    tc.out_dir = out_dir;
    out << "training " << model.parameter_count() << " parameters on " << data.size() << " pairs for " << tc.steps
        << " steps\n";
    const TrainState st = fit(model, data, tc, [&](const StepRecord& r) {
      if (r.step % tc.log_every == 0 || r.step + 1 == tc.steps) out << format_step_record(r) << "\n";
    });
    for (const auto& p : st.checkpoints) out << "checkpoint " << p.string() << "\n";
  } catch (const std::exception& e) {
    // Leave a marker so partial outputs are not mistaken for a finished run.
    write_text(out_dir / "FAILED", std::string(e.what()) + "\n");
    throw;
  }
}

void cmd_infer(const std::string& ckpt, const std::string& input, const std::string& output, std::ostream& out) {
  const Model model = load_checkpoint(ckpt);
  const Tensor img = load_image(input);
  model.check_input(Shape{1, img.dim(0), img.dim(1), img.dim(2)});
  const Tensor restored = from_batch(model.forward(to_batch({img})), 0);
  save_image(restored, output);
  out << "wrote " << output << "\n";
}

fs::path find_prediction(const fs::path& dir, const std::string& id) {
  for (const std::string& name : {id + "_pred.ppm", id + ".ppm", id + "_gt.ppm"}) {
    if (fs::exists(dir / name)) return dir / name;
  }
  throw IoError("no prediction for '" + id + "' in '" + dir.string() + "' (tried " + id + "_pred.ppm, " + id +
                ".ppm, " + id + "_gt.ppm)");
}

void cmd_eval(const std::string& pred, const std::string& gt, const std::string& report_path, std::ostream& out) {
  if (!fs::is_directory(gt)) throw IoError("ground-truth directory '" + gt + "' does not exist");
  if (!fs::is_directory(pred)) throw IoError("prediction directory '" + pred + "' does not exist");
  constexpr std::string_view kGt = "_gt.ppm";
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(gt)) {
    const std::string name = e.path().filename().string();
    if (name.size() > kGt.size() && name.ends_with(kGt)) ids.push_back(name.substr(0, name.size() - kGt.size()));
  }
  if (ids.empty()) throw IoError("no <id>_gt.ppm files in '" + gt + "'");
  std::sort(ids.begin(), ids.end());
  MetricsReport report;
  for (const auto& id : ids) {
    const Tensor target = load_ppm(fs::path(gt) / (id + "_gt.ppm"));
    const Tensor p = load_ppm(find_prediction(pred, id));
    report.add({id, psnr(p, target), ssim(p, target), entropy(p)});
  }
  const std::string text = report.format();
  if (!report_path.empty()) {
    const fs::path rp = report_path;
    if (rp.has_parent_path()) fs::create_directories(rp.parent_path());
    report.write(rp);
  }
  out << text;
}

int cmd_verify(const std::string& suite, std::ostream& out) {
  int failures = 0;
  run_verify_suite(suite, [&](const CheckResult& r) {
    out << format_check(r) << "\n" << std::flush;
    if (!r.passed) ++failures;
  });
  out << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed") << "\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wavelet-transformer dehazing: synthesize data, train, infer, evaluate, verify", "wfn"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write synthetic hazy/clean pairs and a manifest");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--count", synth.count, "Number of pairs");
  s->add_option("--size", synth.size, "Image extents HxW");
  s->add_option("--depth", synth.depth, "Depth field: ramp, radial or blocks");
  s->add_option("--beta-range", synth.beta_range, "Scattering coefficient range a..b");
  s->add_option("--airlight-range", synth.airlight_range, "Airlight range a..b");
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_option("--multiple", synth.multiple, "Required extent multiple (default: that of the default network)");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model and write checkpoints plus metrics.log");
  t->add_option("--config", train.config, "key = value config file");
  t->add_option("--data", train.data, "Directory of <id>_hazy.ppm / <id>_gt.ppm pairs");
  t->add_option("--out", train.out, "Output directory");
  t->add_option("--ablate", train.ablate, "Variant: full, w/o-dwt, w/o-parallel, w/o-fam or w/o-aspp");

  std::string ckpt, input, output;
  auto* i = app.add_subcommand("infer", "Restore one image with a checkpoint");
  i->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  i->add_option("--input", input, "Input .ppm")->required();
  i->add_option("--output", output, "Output .ppm")->required();

  std::string pred, gt, report;
  auto* e = app.add_subcommand("eval", "Score predictions against ground truth");
  e->add_option("--pred", pred, "Prediction directory")->required();
  e->add_option("--gt", gt, "Ground-truth directory")->required();
  e->add_option("--report", report, "Report file");

  std::string suite = "all";
  auto* v = app.add_subcommand("verify", "Run the built-in property checks");
  v->add_option("--suite", suite, "wavelet, grad, metrics, asm or all");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (s->parsed()) cmd_synth(synth, out);
    else if (t->parsed()) cmd_train(train, out);
    else if (i->parsed()) cmd_infer(ckpt, input, output, out);
    else if (e->parsed()) cmd_eval(pred, gt, report, out);
    else if (v->parsed()) return cmd_verify(suite, out);
  } catch (const std::exception& ex) {
    err << "wfn: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace wfn
