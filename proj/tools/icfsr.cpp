// icfsr: train, apply and evaluate scale-conditional resampling networks.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "icfsr/icfsr.hpp"

namespace fs = std::filesystem;
using namespace icfsr;

namespace {

enum Exit { kOk = 0, kRuntime = 1, kUsage = 2, kData = 3 };

void log(const std::string& msg) { std::cerr << "icfsr: " << msg << '\n'; }

int thread_cap(int requested) {
    int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("ICF_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || cap < 1)
            throw InvalidArgument(std::string("ICF_THREADS must be a positive integer, got '") + env + "'");
        n = std::min<long>(n, cap);
    }
    return n;
}

/// A PNG file, or every *.png in a directory (sorted by name).
std::vector<fs::path> list_images(const fs::path& input) {
    std::error_code ec;
    if (fs::is_regular_file(input, ec)) return {input};
    if (!fs::is_directory(input, ec)) throw DataError("input not found: " + input.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(input)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") out.push_back(e.path());
    }
    if (out.empty()) throw DataError("no PNG images in " + input.string());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<fs::path> list_all(const std::vector<std::string>& inputs) {
    std::vector<fs::path> out;
    for (const auto& in : inputs) {
        auto some = list_images(in);
        out.insert(out.end(), some.begin(), some.end());
    }
    return out;
}

Image load_rgb(const fs::path& p) {
    Image img = load_image(p);
    if (img.channels != 3) throw DataError("expected an RGB image: " + p.string());
    return img;
}

/// Output path for `src`: `out` itself for a single file whose name ends
/// in .png, else out/<stem>.png.
fs::path output_for(const fs::path& src, const fs::path& out, bool single) {
    if (single && out.extension() == ".png") {
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        return out;
    }
    fs::create_directories(out);
    return out / (src.stem().string() + ".png");
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::vector<std::string> inputs;
    std::string out = "run";
    std::string config;
    std::string resume;
    int scale = 0;
    std::vector<int> scales;
    int save_every = 0;
};

template <class T>
int run_train(const std::vector<Image>& data, const ModelConfig& model, const TrainConfig& cfg,
              const TrainArgs& args, const Checkpoint<T>* resume) {
    const fs::path out = args.out;
    fs::create_directories(out);
    {
        std::ofstream f(out / "config.txt", std::ios::trunc);
        f << render_key_values(to_key_values(cfg)) << render_key_values(to_key_values(model), "model.");
    }
    const fs::path log_path = out / "loss.tsv";
    const bool append = resume && fs::exists(log_path);
    std::ofstream loss(log_path, append ? std::ios::app : std::ios::trunc);
    if (!loss) throw DataError("cannot write " + log_path.string());
    if (!append) {
        loss << "epoch\tstep\tl_cons\tl_color\tl_total\tlr";
        if (cfg.scale_set.size() > 1)
            for (int s : cfg.scale_set) loss << "\tl_cons_x" << s << "\tl_color_x" << s;
        loss << '\n';
    }

    TrainHooks<T> hooks;
    double epoch_sum = 0.0;
    int epoch_n = 0;
    hooks.on_step = [&](const StepInfo& s) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%d\t%lld\t%.8g\t%.8g\t%.8g\t%.8g", s.epoch + 1,
                      static_cast<long long>(s.global_step), s.report.l_cons, s.report.l_color,
                      s.report.l_total, s.lr);
        loss << buf;
        if (cfg.scale_set.size() > 1)
            for (const auto& ps : s.report.per_scale) {
                std::snprintf(buf, sizeof buf, "\t%.8g\t%.8g", ps.l_cons, ps.l_color);
                loss << buf;
            }
        loss << '\n';
        epoch_sum += s.report.l_total;
        ++epoch_n;
    };
    hooks.on_epoch = [&](const Checkpoint<T>& ck) {
        loss.flush();
        save_checkpoint(ck, out / "model.ckpt");
        if (args.save_every > 0 && ck.epoch % args.save_every == 0) {
            char name[64];
            std::snprintf(name, sizeof name, "epoch_%04d.ckpt", ck.epoch);
            save_checkpoint(ck, out / name);
        }
        std::ostringstream msg;
        msg << "epoch " << ck.epoch << "/" << cfg.epochs << " mean l_total "
            << (epoch_n ? epoch_sum / epoch_n : 0.0);
        log(msg.str());
        epoch_sum = 0.0;
        epoch_n = 0;
    };
    hooks.log = log;
    const auto ck = train<T>(data, model, cfg, hooks, resume);
    save_checkpoint(ck, out / "model.ckpt");
    log("wrote " + (out / "model.ckpt").string());
    return kOk;
}

int cmd_train(const TrainArgs& args, CLI::App& sub) {
    TrainConfig cfg;
    ModelConfig model;
    std::string resume_dtype;
    if (!args.resume.empty()) {
        resume_dtype = checkpoint_dtype(args.resume);
        if (resume_dtype == "f64") {
            const auto ck = load_checkpoint<double>(args.resume);
            cfg = ck.train;
            model = ck.model;
        } else {
            const auto ck = load_checkpoint<float>(args.resume);
            cfg = ck.train;
            model = ck.model;
        }
    }
    if (!args.config.empty()) {
        std::ifstream f(args.config);
        if (!f) throw DataError("cannot read config file " + args.config);
        std::stringstream ss;
        ss << f.rdbuf();
        for (const auto& [k, v] : parse_key_values(ss.str())) {
            const bool known = k.rfind("model.", 0) == 0
                                   ? apply_key_value(model, k.substr(6), v)
                                   : apply_key_value(cfg, k, v) || apply_key_value(model, k, v);
            if (!known) throw InvalidArgument("unknown config key '" + k + "'");
        }
    }
    // flags override the file
    auto set = [&](const char* flag, const char* key) {
        auto* opt = sub.get_option(flag);
        if (opt->count() > 0) {
            const std::string v = opt->as<std::string>();
            if (!apply_key_value(cfg, key, v) && !apply_key_value(model, key, v))
                throw InvalidArgument(std::string("unknown option ") + flag);
        }
    };
    set("--epochs", "epochs");
    set("--seed", "seed");
    set("--patch-size", "patch_size");
    set("--batch-size", "batch_size");
    set("--lambda-color", "lambda_color");
    set("--lr", "lr_init");
    set("--lr-decay-every", "lr_decay_every");
    set("--steps-per-epoch", "steps_per_epoch");
    set("--precision", "precision");
    set("--n-resblocks", "n_resblocks");
    set("--n-channels", "n_channels");
    if (sub.get_option("--no-augment")->count() > 0) cfg.augment = false;
    if (args.scale > 0 && !args.scales.empty()) throw InvalidArgument("give --scale or --scales, not both");
    if (args.scale > 0) cfg.scale_set = {args.scale};
    if (!args.scales.empty()) cfg.scale_set = args.scales;
    if (args.resume.empty()) model.scale_set = cfg.scale_set;
    cfg.threads = thread_cap(sub.get_option("--threads")->count() ? sub.get_option("--threads")->as<int>() : 0);
    cfg.validate();
    model.validate();

    if (args.inputs.empty()) throw DataError("no --input given");
    std::vector<Image> data;
    for (const auto& p : list_all(args.inputs)) data.push_back(load_rgb(p));
    log("training on " + std::to_string(data.size()) + " image(s), scales " +
        detail::join_ints(cfg.scale_set) + ", " + std::to_string(cfg.precision) + "-bit");

    if (!args.resume.empty()) {
        if ((resume_dtype == "f64") != (cfg.precision == 64))
            throw InvalidArgument("precision differs from the resumed checkpoint (" + resume_dtype + ")");
        if (resume_dtype == "f64") {
            const auto ck = load_checkpoint<double>(args.resume);
            return run_train<double>(data, model, cfg, args, &ck);
        }
        const auto ck = load_checkpoint<float>(args.resume);
        return run_train<float>(data, model, cfg, args, &ck);
    }
    if (cfg.precision == 64) return run_train<double>(data, model, cfg, args, nullptr);
    return run_train<float>(data, model, cfg, args, nullptr);
}

// ------------------------------------------------------ sr / downsample

struct ApplyArgs {
    std::string checkpoint;
    std::vector<std::string> inputs;
    std::string out;
    int scale = 2;
};

template <class T>
int run_apply(const ApplyArgs& args, bool up) {
    const auto ck = load_checkpoint<T>(args.checkpoint);
    if (!ck.model.has_scale(args.scale))
        throw InvalidArgument("scale " + std::to_string(args.scale) + " is not in the model's scale set {" +
                              detail::join_ints(ck.model.scale_set) + "}");
    const auto files = list_all(args.inputs);
    const ScaleCondition s = up ? ScaleCondition::up(args.scale) : ScaleCondition::down(args.scale);
    for (const auto& f : files) {
        Image img = load_rgb(f);
        if (!up) img = crop_for_scale(img, args.scale, [&](const std::string& w) { log(f.filename().string() + ": " + w); });
        const Image result = forward(ck.params, img, s);
        const auto dst = output_for(f, args.out, files.size() == 1);
        save_image(result, dst);
        log(f.filename().string() + " " + dims_string(img.height, img.width) + " -> " +
            dims_string(result.height, result.width) + " " + dst.string());
    }
    return kOk;
}

int cmd_apply(const ApplyArgs& args, bool up) {
    if (checkpoint_dtype(args.checkpoint) == "f64") return run_apply<double>(args, up);
    return run_apply<float>(args, up);
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string pred;
    std::string gt;
    std::string mode = "y";
    int shave = 0;
    std::string out;
    bool to_stdout = false;
    std::string scale_label = "-";
    std::string method = "-";
    std::string error_maps;
};

int cmd_eval(const EvalArgs& args) {
    const ColorMode mode = parse_color_mode(args.mode);
    if (args.shave < 0) throw InvalidArgument("--shave must be non-negative");
    const auto pred = list_images(args.pred);
    const auto gt = list_images(args.gt);
    std::map<std::string, fs::path> gt_by_name;
    for (const auto& g : gt) gt_by_name[g.filename().string()] = g;
    if (pred.size() != gt.size()) throw DataError("unpaired files: " + std::to_string(pred.size()) +
                                                  " predictions vs " + std::to_string(gt.size()) + " references");
    const bool single = pred.size() == 1;
    std::vector<MetricRow> rows;
    for (const auto& p : pred) {
        fs::path g;
        if (single) {
            g = gt.front();
        } else {
            const auto it = gt_by_name.find(p.filename().string());
            if (it == gt_by_name.end()) throw DataError("unpaired file: " + p.filename().string());
            g = it->second;
        }
        const Image a = load_image(p), b = load_image(g);
        if (!a.same_shape(b))
            throw DataError("size mismatch for " + p.filename().string() + ": " + shape_string(a) + " vs " +
                            shape_string(b));
        rows.push_back({p.stem().string(), args.scale_label, args.method, psnr(a, b, mode, args.shave),
                        ssim(a, b, mode, args.shave), mae(a, b)});
        if (!args.error_maps.empty()) {
            fs::create_directories(args.error_maps);
            save_image(error_map(a, b), fs::path(args.error_maps) / (p.stem().string() + ".png"));
        }
    }
    if (args.to_stdout || args.out.empty()) write_report(std::cout, rows);
    if (!args.out.empty()) {
        const fs::path out = args.out;
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw DataError("cannot write " + out.string());
        write_report(f, rows);
    }
    return kOk;
}

// ------------------------------------------------------------ baseline

struct BaselineArgs {
    std::vector<std::string> inputs;
    std::string out;
    std::string method = "bicubic";
    int scale = 2;
    std::string direction = "up";
    double sigma = 0.4;
};

int cmd_baseline(const BaselineArgs& args) {
    const std::string& m = args.method;
    const bool blur = m.rfind("gaussian+", 0) == 0;
    const std::string base = blur ? m.substr(9) : m;
    if (base != "bicubic" && base != "nearest")
        throw InvalidArgument("unknown method '" + m +
                              "' (bicubic, nearest, gaussian+bicubic, gaussian+nearest)");
    if (args.scale < 1) throw InvalidArgument("--scale must be a positive integer");
    if (args.direction != "up" && args.direction != "down")
        throw InvalidArgument("--direction must be up or down");
    const bool up = args.direction == "up";
    const double factor = up ? args.scale : 1.0 / args.scale;
    const auto files = list_all(args.inputs);
    for (const auto& f : files) {
        Image img = load_rgb(f);
        if (!up) img = crop_for_scale(img, args.scale, [&](const std::string& w) { log(f.filename().string() + ": " + w); });
        if (blur) img = gaussian_blur(img, args.sigma);
        const Image result = base == "bicubic" ? bicubic_resize(img, factor) : nearest_resize(img, factor);
        save_image(result, output_for(f, args.out, files.size() == 1));
    }
    return kOk;
}

// ----------------------------------------------------------- gen-pairs

struct PairArgs {
    std::string checkpoint;
    std::vector<std::string> inputs;
    std::string out;
    int scale = 2;
    std::string naming = "####";
};

template <class T>
int run_pairs(const PairArgs& args) {
    const auto ck = load_checkpoint<T>(args.checkpoint);
    std::vector<Image> imgs;
    for (const auto& p : list_all(args.inputs)) imgs.push_back(load_rgb(p));
    const auto pairs = generate_pairs(ck.params, imgs, args.scale, [](const std::string& w) { log(w); });
    const auto manifest = export_dataset(pairs, args.out, args.naming);
    log("wrote " + std::to_string(pairs.size()) + " pairs, manifest " + manifest.string());
    return kOk;
}

int cmd_pairs(const PairArgs& args) {
    if (checkpoint_dtype(args.checkpoint) == "f64") return run_pairs<double>(args);
    return run_pairs<float>(args);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scale-conditional super-resolution and downsampling networks"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Self-supervised training on LR images");
    train_cmd->add_option("-i,--input", ta.inputs, "LR PNG file or directory (repeatable)");
    train_cmd->add_option("-o,--out", ta.out, "Output directory")->capture_default_str();
    train_cmd->add_option("--config", ta.config, "key=value config file (flags override it)");
    train_cmd->add_option("--resume", ta.resume, "Checkpoint to continue from");
    train_cmd->add_option("--scale", ta.scale, "Single training scale");
    train_cmd->add_option("--scales", ta.scales, "Multi-scale set, e.g. 2,4,8")->delimiter(',');
    train_cmd->add_option("--epochs", "Number of epochs");
    train_cmd->add_option("--seed", "Seed for initialization and sampling");
    train_cmd->add_option("--patch-size", "Training patch size");
    train_cmd->add_option("--batch-size", "Patches per step");
    train_cmd->add_option("--lambda-color", "Weight of the color term");
    train_cmd->add_option("--lr", "Initial learning rate");
    train_cmd->add_option("--lr-decay-every", "Halve the learning rate every N epochs");
    train_cmd->add_option("--steps-per-epoch", "Steps per epoch (0: derive from dataset size)");
    train_cmd->add_option("--precision", "32 or 64");
    train_cmd->add_option("--n-resblocks", "Residual blocks");
    train_cmd->add_option("--n-channels", "Feature channels");
    train_cmd->add_option("--threads", "Worker threads (capped by ICF_THREADS)");
    train_cmd->add_option("--save-every", ta.save_every, "Also keep epoch_NNNN.ckpt every N epochs");
    train_cmd->add_flag("--no-augment", "Disable flip/rotation augmentation");

    ApplyArgs sa, da;
    auto* sr_cmd = app.add_subcommand("sr", "Upscale images with f(x|s)");
    auto* down_cmd = app.add_subcommand("downsample", "Downscale images with f(x|1/s)");
    for (auto [cmd, a] : {std::pair{sr_cmd, &sa}, std::pair{down_cmd, &da}}) {
        cmd->add_option("-c,--checkpoint", a->checkpoint, "Trained checkpoint")->required();
        cmd->add_option("-i,--input", a->inputs, "PNG file or directory (repeatable)")->required();
        cmd->add_option("-o,--out", a->out, "Output PNG (single input) or directory")->required();
        cmd->add_option("-s,--scale", a->scale, "Integer scale")->capture_default_str();
    }

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "PSNR / SSIM / MAE of predictions against references");
    eval_cmd->add_option("--pred", ea.pred, "Prediction PNG or directory")->required();
    eval_cmd->add_option("--gt", ea.gt, "Reference PNG or directory (paired by file name)")->required();
    eval_cmd->add_option("--mode", ea.mode, "y or rgb")->capture_default_str();
    eval_cmd->add_option("--shave", ea.shave, "Border pixels ignored")->capture_default_str();
    eval_cmd->add_option("-o,--out", ea.out, "TSV report path");
    eval_cmd->add_flag("--stdout", ea.to_stdout, "Also print the report to stdout");
    eval_cmd->add_option("--scale-label", ea.scale_label, "Value of the scale column")->capture_default_str();
    eval_cmd->add_option("--method", ea.method, "Value of the method column")->capture_default_str();
    eval_cmd->add_option("--error-maps", ea.error_maps, "Directory for colour-coded error maps");

    BaselineArgs ba;
    auto* base_cmd = app.add_subcommand("baseline", "Classical resampling baselines");
    base_cmd->add_option("-i,--input", ba.inputs, "PNG file or directory (repeatable)")->required();
    base_cmd->add_option("-o,--out", ba.out, "Output PNG (single input) or directory")->required();
    base_cmd->add_option("--method", ba.method, "bicubic, nearest, gaussian+bicubic, gaussian+nearest")
        ->capture_default_str();
    base_cmd->add_option("-s,--scale", ba.scale, "Integer scale")->capture_default_str();
    base_cmd->add_option("--direction", ba.direction, "up or down")->capture_default_str();
    base_cmd->add_option("--sigma", ba.sigma, "Gaussian sigma for gaussian+ methods")->capture_default_str();

    PairArgs pa;
    auto* pair_cmd = app.add_subcommand("gen-pairs", "Export (LR, HR) pairs made with f(x|1/s)");
    pair_cmd->add_option("-c,--checkpoint", pa.checkpoint, "Trained checkpoint")->required();
    pair_cmd->add_option("-i,--input", pa.inputs, "PNG file or directory (repeatable)")->required();
    pair_cmd->add_option("-o,--out", pa.out, "Dataset directory")->required();
    pair_cmd->add_option("-s,--scale", pa.scale, "Integer scale")->capture_default_str();
    pair_cmd->add_option("--naming", pa.naming, "File stem pattern; '#' run becomes the index")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*train_cmd) return cmd_train(ta, *train_cmd);
        if (*sr_cmd) return cmd_apply(sa, true);
        if (*down_cmd) return cmd_apply(da, false);
        if (*eval_cmd) return cmd_eval(ea);
        if (*base_cmd) return cmd_baseline(ba);
        if (*pair_cmd) return cmd_pairs(pa);
    } catch (const InvalidArgument& e) {
        log(std::string("error: ") + e.what());
        return kUsage;
    } catch (const DataError& e) {
        log(std::string("error: ") + e.what());
        return kData;
    } catch (const std::exception& e) {
        log(std::string("error: ") + e.what());
        return kRuntime;
    }
    return kUsage;
}
