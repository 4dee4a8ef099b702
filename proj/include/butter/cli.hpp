#pragma once

#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "butter/config.hpp"
#include "butter/gradcheck.hpp"
#include "butter/verify.hpp"

// Command implementations behind the butterfuse binary. Kept independent of
// the argument parser so the test suite can drive them directly. Output is
// deterministic for a given invocation: no timings, no pointers, no locale.
namespace butter {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFail = 1;
inline constexpr int kExitFormat = 2;
inline constexpr int kExitConfig = 64;   // bad usage or configuration
inline constexpr int kExitRatio = 65;    // decimation ratio outside (0, 0.5)

namespace clidetail {

template <typename Fn>
int guarded(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    err << "input error: " << e.what() << "\n";
    return kExitFormat;
  }
}

inline std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

inline std::string fmt_sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> fuse_param_pointers(FafceParams<T>& p) {
  std::vector<std::pair<std::string, Tensor<T>*>> entries;
  fafce_param_entries("", p, entries);
  return entries;
}

}  // namespace clidetail

// ---- fuse ----

struct FuseArgs {
  std::string a_path;            // fine map, [C,2H,2W]
  std::string b_path;            // coarse map, [Cb,H,W]
  std::string out_path;          // fused output
  std::string params_dir;        // load parameters instead of seeding them
  std::string dump_params_dir;   // write the parameters actually used
  std::string trace_dir;         // write every intermediate stage
  std::string mode = "clfd";     // "clfd" or "nearest"
  RunConfig cfg;
};

inline int cmd_fuse(const FuseArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return clidetail::guarded(
      [&]() {
        args.cfg.validate();
        auto a = read_btf<double>(args.a_path);
        auto b = read_btf<double>(args.b_path);
        if (a.ndim() != 3 || b.ndim() != 3)
          throw IoError("fuse: inputs must be rank-3 feature maps, got " + dims_to_string(a.dims()) + " and " +
                        dims_to_string(b.dims()));
        SplitMix64 rng(args.cfg.seed);
        auto params = random_fafce_params<double>(a.dim(0), args.cfg.f, args.cfg.fhat, rng, 0.5);
        if (b.dim(0) != a.dim(0))
          params.proj = random_tensor<double>({a.dim(0), b.dim(0), 1, 1}, rng, -0.5, 0.5);
        if (args.mode == "nearest")
          params.upsample_mode = UpsampleMode::kNearest;
        else if (args.mode != "clfd")
          throw ConfigError("fuse: unknown upsample mode '" + args.mode + "' (expected clfd or nearest)");
        if (!args.params_dir.empty()) {
          auto loaded = load_named_tensors<double>(args.params_dir);
          auto entries = clidetail::fuse_param_pointers(params);
          for (auto& [name, ptr] : entries) {
            auto it = loaded.find(name);
            if (it == loaded.end()) throw IoError("fuse: parameter directory is missing " + name);
            if (it->second.dims() != ptr->dims())
              throw IoError("fuse: parameter " + name + " has dims " + dims_to_string(it->second.dims()) +
                            ", expected " + dims_to_string(ptr->dims()));
            *ptr = it->second;
          }
          if (loaded.size() != entries.size())
            throw IoError("fuse: parameter directory holds tensors this configuration does not use");
        }
        FafceTrace<double> trace;
        auto fused = fafce_forward(a, b, params, args.trace_dir.empty() ? nullptr : &trace);
        write_btf(args.out_path, fused);
        if (!args.dump_params_dir.empty()) {
          auto entries = clidetail::fuse_param_pointers(params);
          save_named_tensors(args.dump_params_dir, entries);
        }
        if (!args.trace_dir.empty()) {
          std::vector<std::pair<std::string, Tensor<double>*>> stages = {
              {"m", &trace.m},
              {"damping", &trace.damping},
              {"amplifier", &trace.amplifier},
              {"a_enhanced", &trace.a_enhanced},
              {"b_upsampled", &trace.b_upsampled},
              {"b_initial", &trace.b_initial},
              {"similarity", &trace.similarity},
              {"displacement", &trace.displacement},
              {"b_intermediate", &trace.b_intermediate},
              {"b_out", &trace.b_out}};
          save_named_tensors(args.trace_dir, stages);
        }
        out << "fused " << dims_to_string(a.dims()) << " + " << dims_to_string(b.dims()) << " -> "
            << dims_to_string(fused.dims()) << " mode " << args.mode << " ("
            << (args.params_dir.empty() ? "seed " + std::to_string(args.cfg.seed) : "params " + args.params_dir)
            << ")\n";
        return kExitOk;
      },
      err);
}

// ---- spectrum ----

struct SpectrumArgs {
  std::string in_path;
  std::string out_path;
};

// per-channel log magnitude of the frequency transform, channels stacked
// vertically, each normalized to its own peak
inline int cmd_spectrum(const SpectrumArgs& args, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  return clidetail::guarded(
      [&]() {
        auto x = read_btf<double>(args.in_path);
        if (x.ndim() != 3)
          throw IoError("spectrum: input must be a rank-3 feature map, got " + dims_to_string(x.dims()));
        const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
        auto f = dft2(x);
        std::vector<unsigned char> pixels(static_cast<std::size_t>(c) * h * w, 0);
        for (int ch = 0; ch < c; ++ch) {
          double peak = 0;
          std::vector<double> vals(static_cast<std::size_t>(h) * w);
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
              const std::int64_t idx = (static_cast<std::int64_t>(ch) * h + i) * w + j;
              const double v = std::log1p(spectral_magnitude(f, idx));
              vals[static_cast<std::size_t>(i) * w + j] = v;
              peak = std::max(peak, v);
            }
          for (std::size_t i = 0; i < vals.size(); ++i)
            pixels[static_cast<std::size_t>(ch) * h * w + i] =
                peak > 0 ? static_cast<unsigned char>(std::lround(255.0 * vals[i] / peak)) : 0;
        }
        write_pgm(args.out_path, c * h, w, pixels);
        out << "spectrum " << dims_to_string(x.dims()) << " -> " << args.out_path << " (" << c * h << "x" << w
            << " grayscale)\n";
        return kExitOk;
      },
      err);
}

// ---- alias-demo ----

struct AliasArgs {
  double ratio = 0.3;  // frequency as a fraction of the sampling rate
  int samples = 40;
};

// demonstrates the folding law for 2x decimation: a tone at ratio u lands at
// min(frac(2u), 1-frac(2u)) of the reduced rate
inline int cmd_alias_demo(const AliasArgs& args, std::ostream& out = std::cout,
                          std::ostream& err = std::cerr) {
  return clidetail::guarded(
      [&]() {
        if (args.samples <= 2 || args.samples % 2 != 0)
          throw ConfigError("alias-demo: sample count must be even and greater than 2");
        if (!(args.ratio > 0.0 && args.ratio < 0.5)) {
          err << "alias-demo: ratio " << clidetail::fixed6(args.ratio) << " outside the open interval (0, 0.5)\n";
          return kExitRatio;
        }
        const int n = args.samples;
        std::vector<double> signal(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) signal[static_cast<std::size_t>(i)] = std::cos(2.0 * M_PI * args.ratio * i);
        std::vector<double> decimated(static_cast<std::size_t>(n / 2));
        for (int i = 0; i < n / 2; ++i) decimated[static_cast<std::size_t>(i)] = signal[static_cast<std::size_t>(2 * i)];

        auto peak_bin = [](const std::vector<double>& sig) {
          auto f = dft1(sig);
          const int half = static_cast<int>(sig.size()) / 2;
          int best = 1;
          double best_mag = -1;
          for (int k = 1; k <= half; ++k) {
            const double mag = spectral_magnitude(f, k);
            if (mag > best_mag) {
              best_mag = mag;
              best = k;
            }
          }
          return best;
        };
        const int pre_bin = peak_bin(signal);
        const int post_bin = peak_bin(decimated);
        const double doubled = 2.0 * args.ratio;
        const double folded = std::min(doubled - std::floor(doubled), 1.0 - (doubled - std::floor(doubled)));
        const int analytic_bin = static_cast<int>(std::lround(folded * (n / 2)));
        const bool match = post_bin == analytic_bin;

        out << "samples " << n << "\n";
        out << "input ratio " << clidetail::fixed6(args.ratio) << "\n";
        out << "decimated ratio " << clidetail::fixed6(doubled) << "\n";
        out << "folded ratio " << clidetail::fixed6(folded) << "\n";
        out << "peak bin before " << pre_bin << " of " << n << " (ratio "
            << clidetail::fixed6(static_cast<double>(pre_bin) / n) << ")\n";
        out << "peak bin after " << post_bin << " of " << n / 2 << " (ratio "
            << clidetail::fixed6(static_cast<double>(post_bin) / (n / 2)) << ")\n";
        out << "analytic alias bin " << analytic_bin << "\n";
        out << "alias law holds: " << (match ? "yes" : "no") << "\n";
        return match ? kExitOk : kExitVerifyFail;
      },
      err);
}

// ---- verify ----

struct VerifyArgs {
  RunConfig cfg;
  double tamper_softmax = 0.0;
};

inline int cmd_verify(const VerifyArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return clidetail::guarded(
      [&]() {
        args.cfg.validate();
        VerifyOptions opt;
        opt.seed = args.cfg.seed;
        opt.f = args.cfg.f;
        opt.fhat = args.cfg.fhat;
        opt.tamper_softmax = args.tamper_softmax;
        auto results = run_verify_suites(opt);
        int failed = 0;
        for (const auto& r : results) {
          out << std::left << std::setw(26) << r.name << (r.pass ? "PASS" : "FAIL") << "  " << r.detail << "\n";
          failed += r.pass ? 0 : 1;
        }
        out << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " suites passed\n";
        return failed == 0 ? kExitOk : kExitVerifyFail;
      },
      err);
}

// ---- gradcheck ----

struct GradcheckArgs {
  std::string target = "all";
  double eps = 1e-4;
  double threshold = 1e-4;
  RunConfig cfg;
};

inline int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out = std::cout,
                         std::ostream& err = std::cerr) {
  return clidetail::guarded(
      [&]() {
        args.cfg.validate();
        if (args.eps <= 0 || args.threshold <= 0)
          throw ConfigError("gradcheck: eps and threshold must be positive");
        std::vector<std::string> names;
        if (args.target == "all") {
          names = gradcheck_target_names();
        } else {
          const auto known = gradcheck_target_names();
          bool found = false;
          for (const auto& n : known) found = found || n == args.target;
          if (!found) {
            std::string list;
            for (const auto& n : known) list += (list.empty() ? "" : ", ") + n;
            throw ConfigError("gradcheck: unknown target '" + args.target + "' (expected all, " + list + ")");
          }
          names.push_back(args.target);
        }
        bool all_pass = true;
        for (const auto& name : names) {
          auto target = make_gradcheck_target(name, args.cfg.seed);
          auto rep = run_gradcheck(target, args.eps, args.threshold, args.cfg.seed);
          for (const auto& g : rep.groups)
            out << "  " << std::left << std::setw(24) << g.name << std::right << std::setw(5) << g.checked
                << " checked  max err " << clidetail::fmt_sci(g.max_err) << "\n";
          out << "target " << std::left << std::setw(13) << rep.target << (rep.pass ? "PASS" : "FAIL")
              << "  worst " << clidetail::fmt_sci(rep.worst) << " threshold " << clidetail::fmt_sci(rep.threshold)
              << "\n";
          all_pass = all_pass && rep.pass;
        }
        return all_pass ? kExitOk : kExitVerifyFail;
      },
      err);
}

}  // namespace butter
