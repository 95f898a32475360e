#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <thread>

#include "veta/checkpoint.hpp"
#include "veta/image_io.hpp"
#include "veta/metrics.hpp"
#include "veta/parallel.hpp"
#include "veta/random.hpp"
#include "veta/scene_io.hpp"
#include "veta/synthetic.hpp"
#include "veta/trainer.hpp"

namespace veta::cli {

namespace fs = std::filesystem;

namespace {

// Sub-seed streams derived from --seed.
enum : std::uint64_t { kNetSeedStream = 3, kTfeSeedStream = 7 };

struct UsageError : Error {
    using Error::Error;
};

struct GenSceneArgs {
    SyntheticSceneSpec spec;
    std::string out;
};

struct TrainArgs {
    std::string scene;
    std::string out;
    long iters = 3000;
    std::optional<long> switch_iter;
    bool no_frustum_mask = false;
    bool no_deformation = false;
    std::string mono_mode = "corrected";
    double lambda = 0.2;
    double lambda_mono = 0.2;
    std::uint64_t seed = 0;
    long snapshot_every = 0;
    long log_every = 1;
    std::string resume;
    std::vector<std::string> overrides;
};

struct RenderArgs {
    std::string ckpt;
    std::string scene;
    std::string split = "test";
    std::string out;
};

struct EvalArgs {
    std::string ckpt;
    std::string scene;
    std::string split = "test";
    std::string out;
    bool gt_as_prediction = false;
};

struct MiArgs {
    std::string ckpt;
    std::string scene;
    std::string out;
    int bins = 16;
};

void require_scene_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw UsageError("scene directory not found: " + dir);
}

int cmd_gen_scene(const GenSceneArgs& a, std::ostream& out) {
    const SceneManifest m = generate_synthetic(a.spec, a.out);
    out << "wrote " << m.frames.size() << " frames (" << m.train.size() << " train, " << m.test.size() << " test) to "
        << a.out << "\n";
    return kExitOk;
}

TrainConfig build_train_config(const TrainArgs& a, const Scene& scene) {
    TrainConfig cfg = TrainConfig::desk_scale(a.iters);
    if (a.switch_iter) cfg.loss.switch_iter = *a.switch_iter;
    cfg.loss.lambda = a.lambda;
    cfg.loss.lambda_mono = a.lambda_mono;
    cfg.loss.mono_mode = parse_mono_mode(a.mono_mode);
    cfg.frustum_mask = !a.no_frustum_mask;
    cfg.use_deformation = !a.no_deformation;
    cfg.seed = a.seed;
    cfg.tfe_seed = derive_seed(a.seed, kTfeSeedStream);
    cfg.net.seed = derive_seed(a.seed, kNetSeedStream);
    apply_scene(cfg, scene.manifest);
    for (const auto& kv : a.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

std::string snapshot_path(const std::string& ckpt, long iter) {
    fs::path p(ckpt);
    const std::string stem = p.stem().string();
    return (p.parent_path() / (stem + ".iter" + std::to_string(iter) + p.extension().string())).string();
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    require_scene_dir(a.scene);
    if (a.iters <= 0) throw ConfigError("--iters must be positive");
    if (a.log_every <= 0) throw ConfigError("--log-every must be positive");
    const Scene scene = load_scene(a.scene);

    Model model;
    if (!a.resume.empty()) {
        model = load_checkpoint(a.resume);
    } else {
        model = Model::create(build_train_config(a, scene), scene.initial);
    }
    model.intrinsics = scene.manifest.intrinsics;
    if (scene.manifest.train.empty()) throw UsageError("scene has no training views");

    Trainer trainer(std::move(model), split_views(scene, Split::Train));
    const long total = trainer.model().config.total_iters;
    trainer.run(total, [&](const StepLog& log) {
        const long done = log.iter + 1;
        if (done % a.log_every == 0 || done == total) out << log.format() << std::endl;
        if (a.snapshot_every > 0 && done % a.snapshot_every == 0 && done < total) {
            save_checkpoint(snapshot_path(a.out, done), trainer.model());
        }
    });
    save_checkpoint(a.out, trainer.model());
    err << "saved checkpoint " << a.out << "\n";
    return kExitOk;
}

struct LoadedPair {
    Model model;
    Scene scene;
};

LoadedPair load_pair(const std::string& ckpt, const std::string& scene_dir, bool images) {
    require_scene_dir(scene_dir);
    if (!fs::exists(ckpt)) throw UsageError("checkpoint not found: " + ckpt);
    LoadedPair p{load_checkpoint(ckpt), load_scene(scene_dir, images)};
    return p;
}

int cmd_render(const RenderArgs& a, std::ostream& out, std::ostream& err) {
    const Split split = parse_split(a.split);
    const LoadedPair p = load_pair(a.ckpt, a.scene, false);
    const auto& ids = p.scene.manifest.indices(split);
    if (ids.empty()) {
        err << "warning: split '" << a.split << "' is empty; nothing rendered\n";
        return kExitOk;
    }
    const std::vector<Image> renders = render_split(p.model, p.scene, split);
    std::error_code ec;
    fs::create_directories(a.out, ec);
    for (std::size_t k = 0; k < ids.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "%05u.png", ids[k]);
        write_image((fs::path(a.out) / name).string(), renders[k]);
    }
    out << "rendered " << ids.size() << " views to " << a.out << "\n";
    return kExitOk;
}

void write_text(const std::string& path, const std::string& text) {
    const fs::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << text;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    const Split split = parse_split(a.split);
    EvalReport report;
    if (a.gt_as_prediction) {
        require_scene_dir(a.scene);
        const Scene scene = load_scene(a.scene);
        const auto& ids = scene.manifest.indices(split);
        std::vector<Image> gt;
        for (auto i : ids) gt.push_back(scene.images[i]);
        report = evaluate_images(gt, gt, ids);
    } else {
        const LoadedPair p = load_pair(a.ckpt, a.scene, true);
        report = evaluate(p.model, p.scene, split);
    }
    if (report.views.empty()) err << "warning: split '" << a.split << "' is empty\n";
    if (!a.out.empty()) write_text(a.out, report.to_csv());
    out << report.summary() << "\n";
    return kExitOk;
}

int cmd_mi_report(const MiArgs& a, std::ostream& out, std::ostream& err) {
    const LoadedPair p = load_pair(a.ckpt, a.scene, false);
    std::vector<CameraView> cams;
    for (auto i : p.scene.manifest.train) cams.push_back(p.scene.manifest.camera(i));
    if (cams.empty()) throw UsageError("scene has no training views");
    const MiReport r = embedding_mi_report(p.model.net, p.model.cloud, cams, a.bins);
    if (r.low_sample_warning) {
        err << "warning: only " << r.samples << " training views (< 100); MI estimates are coarse\n";
    }
    if (!a.out.empty()) write_text(a.out, r.to_csv());
    out << r.to_csv();
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Thermal Gaussian splatting: synthetic scenes, training, rendering and evaluation", "veta"};
    app.set_config("--config", "", "TOML/INI file; keys mirror flag names, command-line values take precedence");
    app.require_subcommand(1);
    app.fallthrough();
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    app.add_option("--threads", threads, "Worker threads (results do not depend on this)")->check(CLI::PositiveNumber);

    GenSceneArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-scene", "Write a synthetic thermal scene");
    gen_cmd->add_option("--seed", gen.spec.seed, "Generator seed");
    gen_cmd->add_option("--blobs", gen.spec.blobs, "Number of ground-truth blobs");
    gen_cmd->add_option("--view-k", gen.spec.view_k, "View-dependence exponent k");
    gen_cmd->add_option("--frames", gen.spec.frames, "Total frames (train + test)");
    gen_cmd->add_option("--test-every", gen.spec.test_every, "Every n-th frame goes to the test split (0: none)");
    gen_cmd->add_option("--width", gen.spec.width, "Image width");
    gen_cmd->add_option("--height", gen.spec.height, "Image height");
    gen_cmd->add_option("--noise", gen.spec.noise_sigma, "Pixel noise standard deviation");
    gen_cmd->add_option("--points-per-blob", gen.spec.points_per_blob, "Seed points sampled per blob");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Optimize a model on a scene");
    train_cmd->add_option("--scene", tr.scene, "Scene directory")->required();
    train_cmd->add_option("--iters", tr.iters, "Total iterations");
    train_cmd->add_option("--switch-iter", tr.switch_iter, "Iteration at which the Mono term switches on");
    train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
    train_cmd->add_flag("--no-frustum-mask", tr.no_frustum_mask, "Deform every Gaussian in every view");
    train_cmd->add_flag("--no-deformation", tr.no_deformation, "Disable the deformation field");
    train_cmd->add_option("--mono-mode", tr.mono_mode, "literal or corrected")
        ->check(CLI::IsMember({"literal", "corrected"}));
    train_cmd->add_option("--lambda", tr.lambda, "D-SSIM weight");
    train_cmd->add_option("--lambda-mono", tr.lambda_mono, "Mono weight after the switch");
    train_cmd->add_option("--seed", tr.seed, "Run seed");
    train_cmd->add_option("--snapshot-every", tr.snapshot_every, "Write <out>.iter<N> snapshots every N iterations");
    train_cmd->add_option("--log-every", tr.log_every, "Log every N iterations");
    train_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint");
    train_cmd->add_option("--set", tr.overrides, "Override any config key (key=value), repeatable");

    RenderArgs rd;
    auto* render_cmd = app.add_subcommand("render", "Render the views of a split to 16-bit PNGs");
    render_cmd->add_option("--ckpt", rd.ckpt, "Checkpoint")->required();
    render_cmd->add_option("--scene", rd.scene, "Scene directory")->required();
    render_cmd->add_option("--split", rd.split, "train or test")->check(CLI::IsMember({"train", "test"}));
    render_cmd->add_option("--out", rd.out, "Output directory")->required();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint on a split");
    eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint");
    eval_cmd->add_option("--scene", ev.scene, "Scene directory")->required();
    eval_cmd->add_option("--split", ev.split, "train or test")->check(CLI::IsMember({"train", "test"}));
    eval_cmd->add_option("--out", ev.out, "CSV output path");
    eval_cmd->add_flag("--gt-as-prediction", ev.gt_as_prediction, "Sanity mode: score the ground truth against itself");

    MiArgs mi;
    auto* mi_cmd = app.add_subcommand("mi-report", "Mutual information between network inputs and output norms");
    mi_cmd->add_option("--ckpt", mi.ckpt, "Checkpoint")->required();
    mi_cmd->add_option("--scene", mi.scene, "Scene directory")->required();
    mi_cmd->add_option("--out", mi.out, "CSV output path");
    mi_cmd->add_option("--bins", mi.bins, "Histogram bins per axis")->check(CLI::Range(2, 1024));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    set_num_threads(threads);

    try {
        if (gen_cmd->parsed()) {
            try {
                return cmd_gen_scene(gen, out);
            } catch (const IoError& e) {
                err << "error: " << e.what() << "\n";
                return kExitUsage;
            }
        }
        if (train_cmd->parsed()) return cmd_train(tr, out, err);
        if (render_cmd->parsed()) return cmd_render(rd, out, err);
        if (eval_cmd->parsed()) {
            if (!ev.gt_as_prediction && ev.ckpt.empty()) throw UsageError("eval needs --ckpt unless --gt-as-prediction");
            return cmd_eval(ev, out, err);
        }
        if (mi_cmd->parsed()) return cmd_mi_report(mi, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InvalidParameter& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ShapeMismatch& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const MissingFile& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace veta::cli
