// butterfuse: frequency-adaptive feature fusion playground.
//
//   fuse        upsample-and-fuse two feature maps through the full pipeline
//   spectrum    render a feature map's frequency magnitudes as a PGM
//   alias-demo  show the folding law for 2x decimation on a pure tone
//   verify      run every property suite against the brute-force oracles
//   gradcheck   compare reverse-mode gradients against central differences
//
// Exit codes: 0 ok, 1 verification failure, 2 bad input data,
// 64 bad usage or configuration, 65 decimation ratio out of range.

#include <CLI11.hpp>

#include "butter/cli.hpp"

namespace {

// flags beat the config file, the config file beats defaults
butter::RunConfig resolve_config(const std::string& config_path) {
  butter::RunConfig cfg;
  if (!config_path.empty()) cfg = butter::load_config(config_path);
  return cfg;
}

void apply_override(const CLI::Option* opt, std::uint64_t& field, std::uint64_t flag_value) {
  if (opt->count() > 0) field = flag_value;
}

void apply_override(const CLI::Option* opt, int& field, int flag_value) {
  if (opt->count() > 0) field = flag_value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frequency-adaptive feature fusion playground"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "key=value configuration file");

  butter::FuseArgs fuse;
  std::uint64_t seed_flag = 0;
  int f_flag = 0, fhat_flag = 0;
  auto* fuse_cmd = app.add_subcommand("fuse", "fuse a fine and a coarse feature map");
  fuse_cmd->add_option("--a", fuse.a_path, "fine feature map (.btf, [C,2H,2W])")->required();
  fuse_cmd->add_option("--b", fuse.b_path, "coarse feature map (.btf, [Cb,H,W])")->required();
  fuse_cmd->add_option("--out", fuse.out_path, "output path (.btf)")->required();
  fuse_cmd->add_option("--params", fuse.params_dir, "directory of named parameter tensors to load");
  fuse_cmd->add_option("--dump-params", fuse.dump_params_dir, "directory to write the parameters used");
  fuse_cmd->add_option("--trace", fuse.trace_dir, "directory to write every intermediate stage");
  fuse_cmd->add_option("--mode", fuse.mode, "coarse upsampling path: clfd or nearest");
  auto* fuse_seed = fuse_cmd->add_option("--seed", seed_flag, "parameter seed");
  auto* fuse_f = fuse_cmd->add_option("--f", f_flag, "damping stencil extent (odd)");
  auto* fuse_fhat = fuse_cmd->add_option("--fhat", fhat_flag, "amplifier stencil extent (odd)");

  butter::SpectrumArgs spectrum;
  auto* spectrum_cmd = app.add_subcommand("spectrum", "render frequency magnitudes as a PGM image");
  spectrum_cmd->add_option("--in", spectrum.in_path, "feature map (.btf, [C,H,W])")->required();
  spectrum_cmd->add_option("--out", spectrum.out_path, "output image (.pgm)")->required();

  butter::AliasArgs alias;
  auto* alias_cmd = app.add_subcommand("alias-demo", "demonstrate the 2x decimation folding law");
  alias_cmd->add_option("--ratio", alias.ratio, "tone frequency over the sampling rate, in (0, 0.5)");
  alias_cmd->add_option("--samples", alias.samples, "sample count (even)");

  butter::VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify", "run the property suites");
  auto* verify_seed = verify_cmd->add_option("--seed", seed_flag, "suite seed");
  auto* verify_f = verify_cmd->add_option("--f", f_flag, "damping stencil extent (odd)");
  auto* verify_fhat = verify_cmd->add_option("--fhat", fhat_flag, "amplifier stencil extent (odd)");
  verify_cmd->add_option("--tamper-softmax", verify.tamper_softmax,
                         "fault injection: offset added to one softmax output");

  butter::GradcheckArgs gradcheck;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient validation");
  gradcheck_cmd->add_option("--target", gradcheck.target,
                            "all, triggers, displacement, fafce, phffnet, loss, or end2end");
  gradcheck_cmd->add_option("--eps", gradcheck.eps, "central difference step");
  gradcheck_cmd->add_option("--threshold", gradcheck.threshold, "max relative error accepted");
  auto* gradcheck_seed = gradcheck_cmd->add_option("--seed", seed_flag, "instance seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return butter::kExitConfig;
  }

  try {
    auto cfg = resolve_config(config_path);
    if (fuse_cmd->parsed()) {
      apply_override(fuse_seed, cfg.seed, seed_flag);
      apply_override(fuse_f, cfg.f, f_flag);
      apply_override(fuse_fhat, cfg.fhat, fhat_flag);
      fuse.cfg = cfg;
      return butter::cmd_fuse(fuse);
    }
    if (spectrum_cmd->parsed()) return butter::cmd_spectrum(spectrum);
    if (alias_cmd->parsed()) return butter::cmd_alias_demo(alias);
    if (verify_cmd->parsed()) {
      apply_override(verify_seed, cfg.seed, seed_flag);
      apply_override(verify_f, cfg.f, f_flag);
      apply_override(verify_fhat, cfg.fhat, fhat_flag);
      verify.cfg = cfg;
      return butter::cmd_verify(verify);
    }
    if (gradcheck_cmd->parsed()) {
      apply_override(gradcheck_seed, cfg.seed, seed_flag);
      gradcheck.cfg = cfg;
      return butter::cmd_gradcheck(gradcheck);
    }
  } catch (const butter::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return butter::kExitConfig;
  }
  return butter::kExitConfig;
}
