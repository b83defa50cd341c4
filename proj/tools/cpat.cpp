// Command-line surface: forward inference, toy training, metric evaluation,
// FLOPs reporting and ablation pairs. Every subcommand is deterministic
// given (config, seed, inputs).
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "cpat/analysis.hpp"
#include "cpat/data.hpp"
#include "cpat/model.hpp"
#include "cpat/serialize.hpp"
#include "cpat/train.hpp"

namespace {

using namespace cpat;

struct RunConfig {
    CPATConfig model;

    // training loop
    int64_t iters = 500000; // publication-scale default; toy runs pass --iters
    int64_t batch = 32;
    int64_t patch = 64; // LR patch side
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    int64_t lr_halve_every = 0; // 0 = constant learning rate

    uint64_t seed = 0;
    std::string dtype = "f32";

    // synthetic dataset
    int64_t synth_n = 16;
    int64_t synth_size = 96;

    train::TrainOptions train_options() const {
        train::TrainOptions o;
        o.iters = iters;
        o.batch = batch;
        o.patch = patch;
        o.adam = {lr, beta1, beta2, eps};
        o.lr_halve_every = lr_halve_every;
        return o;
    }
};

// "key = value" per line, '#' starts a comment. Keys match the long flag
// names without the leading dashes.
std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError(cat("cannot open config file '", path, "'"));
    std::map<std::string, std::string> kv;
    std::string line;
    int64_t lineno = 0;
    auto trim = [](std::string s) {
        const char* ws = " \t\r";
        const size_t a = s.find_first_not_of(ws);
        if (a == std::string::npos) return std::string();
        const size_t b = s.find_last_not_of(ws);
        return s.substr(a, b - a + 1);
    };
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(cat(path, ":", lineno, ": expected 'key = value'"));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(cat(path, ":", lineno, ": expected 'key = value'"));
        kv[key] = value;
    }
    return kv;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw ConfigError(cat("config key '", key, "': cannot read '", v, "' as a boolean"));
}

void apply_config_entry(RunConfig& rc, const std::string& key, const std::string& value) {
    auto as_i64 = [&] {
        try {
            return static_cast<int64_t>(std::stoll(value));
        } catch (...) {
            throw ConfigError(cat("config key '", key, "': cannot read '", value,
                                  "' as an integer"));
        }
    };
    auto as_f64 = [&] {
        try {
            return std::stod(value);
        } catch (...) {
            throw ConfigError(cat("config key '", key, "': cannot read '", value,
                                  "' as a number"));
        }
    };
    if (key == "channels") rc.model.channels = as_i64();
    else if (key == "rwags") rc.model.rwags = as_i64();
    else if (key == "blocks") rc.model.blocks_per_rwag = as_i64();
    else if (key == "ws") rc.model.ws = as_i64();
    else if (key == "heads") rc.model.heads = as_i64();
    else if (key == "mlp-ratio") rc.model.mlp_ratio = as_f64();
    else if (key == "scale") rc.model.scale = as_i64();
    else if (key == "overlap-alpha") rc.model.overlap_alpha = as_f64();
    else if (key == "enhanced-windows") rc.model.enhanced_windows = parse_bool(value, key);
    else if (key == "shift") rc.model.shift = parse_bool(value, key);
    else if (key == "sfim") rc.model.sfim = parse_bool(value, key);
    else if (key == "freq-domain") rc.model.freq_domain = parse_bool(value, key);
    else if (key == "sfim-per-rwag") rc.model.sfim_per_rwag = parse_bool(value, key);
    else if (key == "sfim-final") rc.model.sfim_final = parse_bool(value, key);
    else if (key == "iters") rc.iters = as_i64();
    else if (key == "batch") rc.batch = as_i64();
    else if (key == "patch") rc.patch = as_i64();
    else if (key == "lr") rc.lr = as_f64();
    else if (key == "beta1") rc.beta1 = as_f64();
    else if (key == "beta2") rc.beta2 = as_f64();
    else if (key == "eps") rc.eps = as_f64();
    else if (key == "lr-halve-every") rc.lr_halve_every = as_i64();
    else if (key == "seed") rc.seed = static_cast<uint64_t>(as_i64());
    else if (key == "dtype") rc.dtype = value;
    else if (key == "synth-n") rc.synth_n = as_i64();
    else if (key == "synth-size") rc.synth_size = as_i64();
    else throw ConfigError(cat("config file: unknown key '", key, "'"));
}

// ------------------------------------------------------------ subcommands

struct ForwardArgs {
    std::string weights, input, output;
    bool ensemble = false;
};

template <typename T>
int run_forward(const RunConfig& rc, const ForwardArgs& args) {
    const WeightStore<T> store = io::load_store<T>(args.weights);
    const ImageRGB in = load_png(args.input);
    const Tensor<T> lr3 = data::image_to_tensor<T>(in);
    const Tensor<T> lr = lr3.reshape({1, 3, in.height, in.width});

    auto forward = [&](const Tensor<T>& x) { return cpat_forward(x, store, rc.model); };
    const Tensor<T> sr =
        args.ensemble ? analysis::self_ensemble<T>(forward, lr) : forward(lr);
    save_png(data::tensor_to_image(sr.reshape({3, sr.dim(2), sr.dim(3)})), args.output);
    std::cout << "wrote " << args.output << " (" << sr.dim(3) << "x" << sr.dim(2) << ")\n";
    return 0;
}

struct TrainArgs {
    std::string out = "cpat_toy.cpw";
    std::string log = "cpat_toy_loss.csv";
    std::string data_manifest; // optional; synthetic set otherwise
};

void write_loss_csv(const std::string& path, const std::vector<train::LogRow>& log) {
    std::ofstream f(path);
    if (!f) throw DataError(cat("cannot open '", path, "' for writing"));
    f << "iter,loss,lr,seconds\n";
    char buf[128];
    for (const auto& row : log) {
        std::snprintf(buf, sizeof buf, "%lld,%.8g,%.8g,%.3f\n",
                      static_cast<long long>(row.iter), row.loss, row.lr, row.seconds);
        f << buf;
    }
}

template <typename T>
int run_train_toy(const RunConfig& rc, const TrainArgs& args) {
    rc.model.validate();
    const int64_t params = param_count(rc.model);
    if (params > 5'000'000)
        throw ConfigError(cat("train-toy: configured model has ", params,
                              " parameters; the desk-scale guard allows 5000000"));

    std::vector<ImageRGB> images = args.data_manifest.empty()
                                       ? data::synth_dataset(rc.synth_n, rc.synth_size, rc.seed)
                                       : data::load_manifest(args.data_manifest);
    data::PairStream<T> stream(std::move(images), rc.model.scale, rc.patch, rc.seed + 1);
    WeightStore<T> store = init_weights<T>(rc.model, rc.seed);

    auto result = train::run_training<T>(rc.model, std::move(store), stream, rc.train_options());
    write_loss_csv(args.log, result.log);
    io::save_store(args.out, result.weights);

    if (result.diverged) {
        std::cerr << "training diverged (non-finite loss) after " << result.log.size()
                  << " iterations; last good weights kept in " << args.out << "\n";
        throw NumericError("train-toy: loss became non-finite");
    }
    std::cout << "trained " << result.log.size() << " iterations, final loss "
              << (result.log.empty() ? 0.0 : result.log.back().loss) << "\n"
              << "weights: " << args.out << "\nloss log: " << args.log << "\n";
    return 0;
}

struct MetricsArgs {
    std::string sr, hr;
};

template <typename T>
int run_metrics(const RunConfig& rc, const MetricsArgs& args) {
    const ImageRGB sr_img = load_png(args.sr);
    const ImageRGB hr_img = load_png(args.hr);
    if (sr_img.width != hr_img.width || sr_img.height != hr_img.height)
        throw DataError(cat("metrics: image sizes differ: ", sr_img.width, "x", sr_img.height,
                            " vs ", hr_img.width, "x", hr_img.height));
    const Tensor<T> sr_y = analysis::rgb_to_y(
        ops::scale(data::image_to_tensor<T>(sr_img), static_cast<T>(255)));
    const Tensor<T> hr_y = analysis::rgb_to_y(
        ops::scale(data::image_to_tensor<T>(hr_img), static_cast<T>(255)));
    const double p = analysis::psnr(sr_y, hr_y, 255.0, rc.model.scale);
    const double s = analysis::ssim(sr_y, hr_y, 255.0, rc.model.scale);
    std::printf("PSNR: %.2f dB  SSIM: %.4f\n", p, s);
    return 0;
}

struct FlopsArgs {
    int64_t hw = 256; // HR image side; the network runs at hw / scale
};

template <typename T>
int run_flops(const RunConfig& rc, const FlopsArgs& args) {
    const int64_t feat = std::max<int64_t>(1, args.hw / rc.model.scale);
    const CPATConfig& m = rc.model;

    analysis::FlopsReport closed;
    closed.add("global_msa_closed_form",
               analysis::flops_global_msa(feat, feat, m.channels));
    closed.add("vewin_closed_form",
               analysis::flops_vewin(feat, feat, m.channels, m.ws));
    closed.add("vewin_measured",
               analysis::measure_attention_macs<T>(feat, feat, m.channels, m.heads, m.ws,
                                                   WindowKind::VerticalEnhanced));
    std::cout << "attention complexity at " << feat << "x" << feat << " features (HR "
              << args.hw << "x" << args.hw << ", scale " << m.scale << "):\n"
              << closed.table() << "\n";

    // the closed forms cover degenerate geometries, the stage instrumentation
    // needs a runnable model
    try {
        rc.model.validate();
    } catch (const Error& e) {
        std::cout << "model not runnable at this config (" << e.what()
                  << "); per-stage counts skipped\n";
        return 0;
    }

    // per-stage instrumented totals of one full forward
    WeightStore<T> store = init_weights<T>(m, rc.seed);
    ag::Tape<T> tape;
    Model<T> model(tape, store, m);
    Tensor<T> zeros({1, 3, feat, feat});
    ag::Var<T> x = tape.leaf(zeros);

    analysis::FlopsReport stages;
    ag::Var<T> de1, de2;
    {
        CounterScope scope;
        auto pair = model.dimensionality_expansion(x);
        de1 = pair.first;
        de2 = pair.second;
        stages.add("dimensionality_expansion", scope.macs());
    }
    ag::Var<T> y = de1;
    for (int64_t g = 0; g < m.rwags; ++g) {
        CounterScope scope;
        y = ag::add(model.rwag_forward(y, g), de2);
        stages.add(cat("rwag", g), scope.macs());
    }
    if (m.sfim_final) {
        CounterScope scope;
        y = ag::add(model.final_site(y), de2);
        stages.add("final_fusion", scope.macs());
    }
    {
        CounterScope scope;
        model.reconstruct(y, de1);
        stages.add("reconstruction", scope.macs());
    }
    std::cout << "per-stage multiply-accumulates, one forward pass:\n" << stages.table();
    return 0;
}

struct AblateArgs {
    std::string which;
    std::string out = "cpat_ablation.csv";
};

template <typename T>
int run_ablate(const RunConfig& rc, const AblateArgs& args) {
    CPATConfig on = rc.model;
    CPATConfig off = rc.model;
    if (args.which == "windows") {
        on.enhanced_windows = true;
        off.enhanced_windows = false;
    } else if (args.which == "shift") {
        on.shift = true;
        off.shift = false;
    } else if (args.which == "sfim") {
        on.sfim = true;
        off.sfim = false;
    } else if (args.which == "freq") {
        on.freq_domain = true;
        off.freq_domain = false;
    } else {
        throw ConfigError(cat("ablate: unknown toggle '", args.which,
                              "'; valid names: windows, shift, sfim, freq"));
    }
    on.validate();
    off.validate();
    for (const CPATConfig* c : {&on, &off}) {
        const int64_t params = param_count(*c);
        if (params > 5'000'000)
            throw ConfigError(cat("ablate: configured model has ", params,
                                  " parameters; the desk-scale guard allows 5000000"));
    }

    // identical seed and data stream for both arms
    auto train_arm = [&](const CPATConfig& cfg, uint64_t* hash, uint64_t* ffts) {
        auto images = data::synth_dataset(rc.synth_n, rc.synth_size, rc.seed);
        data::PairStream<T> stream(std::move(images), cfg.scale, rc.patch, rc.seed + 1);
        WeightStore<T> store = init_weights<T>(cfg, rc.seed);
        CounterScope scope;
        auto result = train::run_training<T>(cfg, std::move(store), stream, rc.train_options());
        *hash = result.stream_hash;
        *ffts = scope.fft_calls();
        if (result.diverged) throw NumericError(cat("ablate: '", args.which, "' arm diverged"));
        auto holdout = data::synth_dataset(4, rc.synth_size, rc.seed + 99);
        const double psnr = train::evaluate_psnr_y<T>(result.weights, cfg, holdout);
        return std::make_pair(std::move(result), psnr);
    };

    uint64_t hash_on = 0, hash_off = 0, fft_on = 0, fft_off = 0;
    auto [res_on, psnr_on] = train_arm(on, &hash_on, &fft_on);
    auto [res_off, psnr_off] = train_arm(off, &hash_off, &fft_off);
    if (hash_on != hash_off)
        throw NumericError("ablate: the two arms consumed different data streams");

    std::ofstream f(args.out);
    if (!f) throw DataError(cat("cannot open '", args.out, "' for writing"));
    char buf[160];
    std::snprintf(buf, sizeof buf, "# toggle=%s stream_hash_on=%016llx stream_hash_off=%016llx\n",
                  args.which.c_str(), static_cast<unsigned long long>(hash_on),
                  static_cast<unsigned long long>(hash_off));
    f << buf;
    std::snprintf(buf, sizeof buf, "# fft_calls_on=%llu fft_calls_off=%llu\n",
                  static_cast<unsigned long long>(fft_on),
                  static_cast<unsigned long long>(fft_off));
    f << buf;
    f << "iter,loss_on,loss_off\n";
    for (size_t i = 0; i < res_on.log.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.8g,%.8g\n", i, res_on.log[i].loss,
                      res_off.log[i].loss);
        f << buf;
    }
    std::snprintf(buf, sizeof buf, "psnr,%.4f,%.4f\n", psnr_on, psnr_off);
    f << buf;
    std::cout << "ablation '" << args.which << "': held-out PSNR " << psnr_on << " dB (on) vs "
              << psnr_off << " dB (off); log: " << args.out << "\n";
    return 0;
}

template <typename Fn>
int dispatch_dtype(const std::string& dtype, Fn&& fn) {
    if (dtype == "f32") return fn(float{});
    if (dtype == "f64") return fn(double{});
    throw ConfigError(cat("unknown dtype '", dtype, "'; expected f32 or f64"));
}

} // namespace

int main(int argc, char** argv) {
    RunConfig rc;

    // --config applies before flags, so flags win
    try {
        for (int i = 1; i + 1 < argc; ++i) {
            if (std::string(argv[i]) == "--config") {
                for (const auto& [k, v] : read_config_file(argv[i + 1]))
                    apply_config_entry(rc, k, v);
                break;
            }
        }
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    CLI::App app{"channel-partitioned window-attention super-resolution toolkit"};
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand
    std::string config_path;
    app.add_option("--config", config_path, "config file of 'key = value' lines");
    app.add_option("--seed", rc.seed, "rng seed (env CPAT_SEED overrides)");
    app.add_option("--dtype", rc.dtype, "f32 or f64");

    app.add_option("--channels", rc.model.channels, "embedding channels");
    app.add_option("--rwags", rc.model.rwags, "residual group count");
    app.add_option("--blocks", rc.model.blocks_per_rwag, "attention blocks per group");
    app.add_option("--ws", rc.model.ws, "window size");
    app.add_option("--heads", rc.model.heads, "attention heads");
    app.add_option("--mlp-ratio", rc.model.mlp_ratio, "mlp expansion ratio");
    app.add_option("--scale", rc.model.scale, "upscaling factor (2, 3 or 4)");
    app.add_option("--overlap-alpha", rc.model.overlap_alpha, "overlap ratio");
    app.add_option("--enhanced-windows", rc.model.enhanced_windows,
                   "column/row windows on the first two branches");
    app.add_option("--shift", rc.model.shift, "alternate shifted blocks");
    app.add_option("--sfim", rc.model.sfim, "spatial-frequency fusion modules");
    app.add_option("--freq-domain", rc.model.freq_domain, "frequency core inside the fusion");
    app.add_option("--sfim-per-rwag", rc.model.sfim_per_rwag, "fusion inside each group");
    app.add_option("--sfim-final", rc.model.sfim_final, "trailing fusion after the last group");

    app.add_option("--iters", rc.iters, "training iterations");
    app.add_option("--batch", rc.batch, "batch size");
    app.add_option("--patch", rc.patch, "LR patch size");
    app.add_option("--lr", rc.lr, "learning rate");
    app.add_option("--beta1", rc.beta1, "adam beta1");
    app.add_option("--beta2", rc.beta2, "adam beta2");
    app.add_option("--eps", rc.eps, "adam epsilon");
    app.add_option("--lr-halve-every", rc.lr_halve_every,
                   "halve the learning rate every N iterations (0 = constant)");
    app.add_option("--synth-n", rc.synth_n, "synthetic dataset size");
    app.add_option("--synth-size", rc.synth_size, "synthetic image side");

    ForwardArgs fargs;
    CLI::App* fwd = app.add_subcommand("forward", "super-resolve one PNG");
    fwd->add_option("--weights", fargs.weights, "weight store file")->required();
    fwd->add_option("--input", fargs.input, "input PNG")->required();
    fwd->add_option("--out", fargs.output, "output PNG")->required();
    fwd->add_flag("--ensemble", fargs.ensemble, "average the 8 dihedral transforms");

    TrainArgs targs;
    CLI::App* trn = app.add_subcommand("train-toy", "L1 + Adam on synthetic pairs");
    trn->add_option("--out", targs.out, "output weight file");
    trn->add_option("--log", targs.log, "loss CSV path");
    trn->add_option("--data", targs.data_manifest, "PNG manifest, one path per line");

    MetricsArgs margs;
    CLI::App* met = app.add_subcommand("metrics", "Y-channel PSNR/SSIM of two PNGs");
    met->add_option("--sr", margs.sr, "restored image")->required();
    met->add_option("--hr", margs.hr, "reference image")->required();

    FlopsArgs flargs;
    CLI::App* flp = app.add_subcommand("flops", "closed-form and measured MAC counts");
    flp->add_option("--hw", flargs.hw, "HR image side the counts refer to");

    AblateArgs aargs;
    CLI::App* abl = app.add_subcommand("ablate", "train a toggle on/off pair");
    abl->add_option("--which", aargs.which, "windows | shift | sfim | freq")->required();
    abl->add_option("--out", aargs.out, "comparison CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc_exit = app.exit(e);
        return rc_exit == 0 ? 0 : 1;
    }

    if (const char* env_seed = std::getenv("CPAT_SEED")) {
        try {
            rc.seed = std::stoull(env_seed);
        } catch (...) {
            std::cerr << "error: CPAT_SEED='" << env_seed << "' is not an integer\n";
            return 1;
        }
    }

    try {
        if (*fwd) {
            // pick the arithmetic of the weight file
            const Dtype dt = io::store_file_dtype(fargs.weights);
            return dt == Dtype::f32 ? run_forward<float>(rc, fargs)
                                    : run_forward<double>(rc, fargs);
        }
        if (*trn)
            return dispatch_dtype(rc.dtype, [&](auto tag) {
                return run_train_toy<decltype(tag)>(rc, targs);
            });
        if (*met)
            return run_metrics<double>(rc, margs);
        if (*flp)
            return dispatch_dtype(rc.dtype, [&](auto tag) {
                return run_flops<decltype(tag)>(rc, flargs);
            });
        if (*abl)
            return dispatch_dtype(rc.dtype, [&](auto tag) {
                return run_ablate<decltype(tag)>(rc, aargs);
            });
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
