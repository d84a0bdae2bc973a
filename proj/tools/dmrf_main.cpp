// dmrf: texture synthesis and super-resolution with a deep MRF.
//
// Every subcommand accepts --config FILE holding key=value lines (the manifest
// format this tool writes beside its outputs), with command-line flags taking
// precedence. A run is reproducible by feeding its manifest back through
// --config.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dmrf.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiag = 3;

struct CliError {
    int code;
    std::string message;
};

void fail_data(const std::string& message) { throw CliError{kExitData, message}; }

void check_status(dmrf_status status) {
    if (status == DMRF_OK) return;
    std::string msg = std::string(dmrf_status_name(status)) + ": " + dmrf_last_error();
    throw CliError{status == DMRF_ERR_THRESHOLD ? kExitDiag : kExitData, msg};
}

// RAII wrappers over the opaque handles.
struct Image {
    dmrf_image* ptr = nullptr;
    Image() = default;
    explicit Image(dmrf_image* p) : ptr(p) {}
    Image(Image&& o) noexcept : ptr(o.ptr) { o.ptr = nullptr; }
    Image& operator=(Image&& o) noexcept {
        std::swap(ptr, o.ptr);
        return *this;
    }
    Image(const Image&) = delete;
    ~Image() { dmrf_image_free(ptr); }
};

struct Model {
    dmrf_model* ptr = nullptr;
    explicit Model(dmrf_model* p = nullptr) : ptr(p) {}
    Model(const Model&) = delete;
    ~Model() { dmrf_model_free(ptr); }
};

Image load_image(const std::string& path) {
    dmrf_image* img = nullptr;
    check_status(dmrf_image_load(path.c_str(), &img));
    return Image(img);
}

void save_image(const Image& img, const std::string& path) {
    check_status(dmrf_image_save(img.ptr, path.c_str()));
}

Model load_model(const std::string& path) {
    dmrf_model* m = nullptr;
    check_status(dmrf_model_load(path.c_str(), &m));
    return Model(m);
}

// --- manifests -----------------------------------------------------------

using KeyValues = std::vector<std::pair<std::string, std::string>>;

std::string join_list(const std::vector<std::string>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ';';
        out += values[i];
    }
    return out;
}

std::vector<std::string> split_list(const std::string& joined) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(joined);
    while (std::getline(in, item, ';'))
        if (!item.empty()) out.push_back(item);
    return out;
}

void write_manifest(const std::string& out_path, const std::string& command,
                    const KeyValues& values) {
    const std::string path = out_path + ".manifest";
    std::ofstream out(path, std::ios::trunc);
    if (!out.good()) fail_data("cannot write manifest " + path);
    out << "command=" << command << "\n";
    for (const auto& [k, v] : values) out << k << "=" << v << "\n";
    out << "version=" << dmrf_version() << "\n";
}

KeyValues read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw CliError{kExitUsage, "cannot open config file " + path};
    KeyValues kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw CliError{kExitUsage, "malformed config line: " + line};
        kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return kv;
}

// --- shared option blocks --------------------------------------------------

struct TrainFlags {
    int d = 32;
    int K = 20;
    std::string kind = "sigmoid";
    int patch_size = 25;
    int batch_size = 8;
    int epochs = 10;
    int steps_per_epoch = 100;
    double lr = 1e-3;
    double rms_decay = 0.95;
    double momentum = 0.95;
    double epsilon = 1e-4;
    double grad_clip = 0.0;
    int n_cycles = 1;
    unsigned long long seed = 0;
    int threads = 0;
    int checkpoint_every = 0;
    std::string loss_csv;
    std::string resume;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, int task) {
    dmrf_train_options defaults;
    dmrf_train_options_init(&defaults, task);
    f.patch_size = defaults.patch_size;
    f.batch_size = defaults.batch_size;
    f.epochs = defaults.epochs;
    f.steps_per_epoch = defaults.steps_per_epoch;
    f.lr = defaults.learning_rate;
    f.rms_decay = defaults.rms_decay;
    f.momentum = defaults.momentum;
    f.epsilon = defaults.epsilon;
    f.grad_clip = defaults.grad_clip;
    if (task == DMRF_TASK_SR) f.K = 1;
    cmd->add_option("--d", f.d, "hidden state dimension");
    if (task != DMRF_TASK_SR) cmd->add_option("--K", f.K, "mixture components");
    cmd->add_option("--kind", f.kind, "activation: sigmoid|relu")
        ->check(CLI::IsMember({"sigmoid", "relu"}));
    cmd->add_option("--patch-size", f.patch_size, "training patch side length");
    cmd->add_option("--batch-size", f.batch_size, "patches per step");
    cmd->add_option("--epochs", f.epochs, "training epochs (absolute target)");
    cmd->add_option("--steps-per-epoch", f.steps_per_epoch, "optimizer steps per epoch");
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--rms-decay", f.rms_decay, "rmsprop decay rho");
    cmd->add_option("--momentum", f.momentum, "rmsprop momentum");
    cmd->add_option("--epsilon", f.epsilon, "rmsprop epsilon");
    cmd->add_option("--grad-clip", f.grad_clip, "global-norm gradient clip, <=0 disables");
    cmd->add_option("--n-cycles", f.n_cycles, "inference cycles (each = forward + backward pass)");
    cmd->add_option("--seed", f.seed, "rng seed");
    cmd->add_option("--threads", f.threads, "worker threads (0 = auto, DMRF_THREADS honored)");
    cmd->add_option("--checkpoint-every", f.checkpoint_every, "epochs between checkpoint writes");
    cmd->add_option("--loss-csv", f.loss_csv, "loss history CSV path");
    cmd->add_option("--resume", f.resume, "checkpoint to resume from");
}

KeyValues train_flag_values(const TrainFlags& f, int task) {
    KeyValues kv;
    auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    kv.emplace_back("d", std::to_string(f.d));
    if (task != DMRF_TASK_SR) kv.emplace_back("K", std::to_string(f.K));
    kv.emplace_back("kind", f.kind);
    kv.emplace_back("patch-size", std::to_string(f.patch_size));
    kv.emplace_back("batch-size", std::to_string(f.batch_size));
    kv.emplace_back("epochs", std::to_string(f.epochs));
    kv.emplace_back("steps-per-epoch", std::to_string(f.steps_per_epoch));
    kv.emplace_back("lr", num(f.lr));
    kv.emplace_back("rms-decay", num(f.rms_decay));
    kv.emplace_back("momentum", num(f.momentum));
    kv.emplace_back("epsilon", num(f.epsilon));
    kv.emplace_back("grad-clip", num(f.grad_clip));
    kv.emplace_back("n-cycles", std::to_string(f.n_cycles));
    kv.emplace_back("seed", std::to_string(f.seed));
    kv.emplace_back("threads", std::to_string(f.threads));
    kv.emplace_back("checkpoint-every", std::to_string(f.checkpoint_every));
    if (!f.loss_csv.empty()) kv.emplace_back("loss-csv", f.loss_csv);
    if (!f.resume.empty()) kv.emplace_back("resume", f.resume);
    return kv;
}

dmrf_train_options to_options(const TrainFlags& f, int task, const std::string& out) {
    dmrf_train_options opt;
    dmrf_train_options_init(&opt, task);
    opt.patch_size = f.patch_size;
    opt.batch_size = f.batch_size;
    opt.epochs = f.epochs;
    opt.steps_per_epoch = f.steps_per_epoch;
    opt.learning_rate = static_cast<float>(f.lr);
    opt.rms_decay = static_cast<float>(f.rms_decay);
    opt.momentum = static_cast<float>(f.momentum);
    opt.epsilon = static_cast<float>(f.epsilon);
    opt.grad_clip = static_cast<float>(f.grad_clip);
    opt.threads = f.threads;
    opt.checkpoint_every = f.checkpoint_every;
    static thread_local std::string ckpt_path, csv_path;
    ckpt_path = out;
    opt.checkpoint_path = ckpt_path.c_str();
    if (!f.loss_csv.empty()) {
        csv_path = f.loss_csv;
        opt.loss_csv_path = csv_path.c_str();
    }
    return opt;
}

Model make_or_resume_model(const TrainFlags& f, int task, int pixel_channels, int sr_factor) {
    if (!f.resume.empty()) return load_model(f.resume);
    dmrf_model_desc desc;
    dmrf_model_desc_init(&desc, task);
    desc.hidden_dim = f.d;
    desc.mixture_count = task == DMRF_TASK_SR ? 1 : f.K;
    desc.pixel_channels = pixel_channels;
    desc.conditioning_dim = task == DMRF_TASK_SR ? 1 : 0;
    desc.activation = f.kind == "relu" ? DMRF_ACT_RELU : DMRF_ACT_SIGMOID;
    desc.task = task;
    desc.sr_factor = sr_factor;
    desc.n_cycles = f.n_cycles;
    desc.seed = f.seed;
    dmrf_model* m = nullptr;
    check_status(dmrf_model_create(&desc, &m));
    return Model(m);
}

// --- subcommand runners ------------------------------------------------

int run_train_texture(const TrainFlags& f, const std::string& input, const std::string& out,
                      int verbosity) {
    const Image texture = load_image(input);
    Model model = make_or_resume_model(f, DMRF_TASK_TEXTURE, dmrf_image_channels(texture.ptr), 0);
    const dmrf_train_options opt = to_options(f, DMRF_TASK_TEXTURE, out);
    const dmrf_image* targets[1] = {texture.ptr};
    check_status(dmrf_train(model.ptr, targets, nullptr, 1, &opt));
    KeyValues kv = train_flag_values(f, DMRF_TASK_TEXTURE);
    kv.emplace_back("input", input);
    kv.emplace_back("out", out);
    write_manifest(out, "train-texture", kv);
    if (verbosity > 0)
        std::cout << "trained texture model -> " << out << " (epoch "
                  << dmrf_model_epoch(model.ptr) << ", step " << dmrf_model_step(model.ptr)
                  << ")\n";
    return 0;
}

int run_synth(const std::string& ckpt, const std::string& size, unsigned long long seed,
              int refine, const std::string& out, int verbosity) {
    int height = 0, width = 0;
    if (std::sscanf(size.c_str(), "%dx%d", &height, &width) != 2 || height < 1 || width < 1)
        throw CliError{kExitUsage, "--size expects HxW, e.g. 64x64"};
    const Model model = load_model(ckpt);
    dmrf_image* raw = nullptr;
    check_status(dmrf_synthesize(model.ptr, height, width, seed, refine, &raw));
    const Image img(raw);
    save_image(img, out);
    {
        std::ofstream sidecar(out + ".seed.txt", std::ios::trunc);
        sidecar << "seed=" << seed << "\n";
    }
    KeyValues kv = {{"ckpt", ckpt},
                    {"size", size},
                    {"seed", std::to_string(seed)},
                    {"refine", std::to_string(refine)},
                    {"out", out}};
    write_manifest(out, "synth", kv);
    if (verbosity > 0) std::cout << "synthesized " << size << " -> " << out << "\n";
    return 0;
}

int run_make_sr_data(const std::vector<std::string>& inputs, int factor,
                     const std::string& out_dir, int verbosity) {
    if (inputs.empty()) throw CliError{kExitUsage, "make-sr-data: no --inputs given"};
    fs::create_directories(out_dir);
    for (const auto& path : inputs) {
        const Image hires = load_image(path);
        dmrf_image *low = nullptr, *target = nullptr;
        check_status(dmrf_sr_prepare(hires.ptr, factor, &low, &target));
        const Image low_img(low), target_img(target);
        const std::string stem = fs::path(path).stem().string();
        const std::string prefix = (fs::path(out_dir) / (stem + "_x" + std::to_string(factor))).string();
        save_image(low_img, prefix + "_lr.pgm");
        save_image(target_img, prefix + "_hr.pgm");
        if (verbosity > 0) std::cout << stem << " -> " << prefix << "_{lr,hr}.pgm\n";
    }
    KeyValues kv = {{"inputs", join_list(inputs)},
                    {"factor", std::to_string(factor)},
                    {"out-dir", out_dir}};
    write_manifest((fs::path(out_dir) / "dataset").string(), "make-sr-data", kv);
    return 0;
}

// Pairs of <stem>_lr.pgm / <stem>_hr.pgm under dir, sorted by name.
std::vector<std::pair<std::string, std::string>> find_sr_pairs(const std::string& dir) {
    std::vector<std::pair<std::string, std::string>> pairs;
    if (!fs::is_directory(dir)) fail_data("not a directory: " + dir);
    std::vector<std::string> hr_files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.find("_hr.") != std::string::npos) hr_files.push_back(entry.path().string());
    }
    std::sort(hr_files.begin(), hr_files.end());
    for (const auto& hr : hr_files) {
        std::string lr = hr;
        const auto at = lr.rfind("_hr.");
        lr.replace(at, 4, "_lr.");
        if (!fs::exists(lr)) fail_data("missing low-res pair for " + hr);
        pairs.emplace_back(lr, hr);
    }
    if (pairs.empty()) fail_data("no *_hr.* images under " + dir);
    return pairs;
}

int run_train_sr(const TrainFlags& f, const std::string& data_dir, int factor,
                 const std::string& out, int verbosity) {
    const auto pair_paths = find_sr_pairs(data_dir);
    std::vector<Image> lows, highs;
    std::vector<const dmrf_image*> low_ptrs, high_ptrs;
    for (const auto& [lr, hr] : pair_paths) {
        lows.push_back(load_image(lr));
        highs.push_back(load_image(hr));
        low_ptrs.push_back(lows.back().ptr);
        high_ptrs.push_back(highs.back().ptr);
    }
    Model model = make_or_resume_model(f, DMRF_TASK_SR, 1, factor);
    const dmrf_train_options opt = to_options(f, DMRF_TASK_SR, out);
    check_status(dmrf_train(model.ptr, high_ptrs.data(), low_ptrs.data(), high_ptrs.size(), &opt));
    KeyValues kv = train_flag_values(f, DMRF_TASK_SR);
    kv.emplace_back("data-dir", data_dir);
    kv.emplace_back("factor", std::to_string(factor));
    kv.emplace_back("out", out);
    write_manifest(out, "train-sr", kv);
    if (verbosity > 0)
        std::cout << "trained x" << factor << " SR model on " << pair_paths.size()
                  << " image pairs -> " << out << "\n";
    return 0;
}

int run_sr(const std::string& ckpt, const std::string& input, int factor, const std::string& out,
           int verbosity) {
    const Model model = load_model(ckpt);
    const Image low = load_image(input);
    dmrf_image* raw = nullptr;
    check_status(dmrf_super_resolve(model.ptr, low.ptr, factor, &raw));
    const Image hi(raw);
    save_image(hi, out);
    KeyValues kv = {{"ckpt", ckpt}, {"input", input}, {"factor", std::to_string(factor)}, {"out", out}};
    write_manifest(out, "sr", kv);
    if (verbosity > 0)
        std::cout << "super-resolved " << input << " x" << factor << " -> " << out << "\n";
    return 0;
}

int run_eval_psnr(const std::vector<std::string>& pairs, int shave, int factor,
                  const std::string& method, const std::string& csv, int verbosity) {
    if (pairs.empty() || pairs.size() % 2 != 0)
        throw CliError{kExitUsage, "--pairs expects an even list: a1 b1 [a2 b2 ...]"};
    std::ostringstream rows;
    double sum = 0.0;
    const std::size_t n = pairs.size() / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const Image a = load_image(pairs[2 * i]);
        const Image b = load_image(pairs[2 * i + 1]);
        double db = 0.0;
        int infinite = 0;
        check_status(dmrf_psnr(a.ptr, b.ptr, shave, &db, &infinite));
        char buf[64];
        if (infinite)
            std::snprintf(buf, sizeof(buf), "inf");
        else
            std::snprintf(buf, sizeof(buf), "%.6f", db);
        rows << fs::path(pairs[2 * i]).filename().string() << "," << factor << "," << method << ","
             << buf << "\n";
        sum += db;
        if (verbosity > 0)
            std::cout << pairs[2 * i] << " vs " << pairs[2 * i + 1] << ": " << buf << " dB\n";
    }
    std::cout << "mean_psnr_db=" << (sum / static_cast<double>(n)) << "\n";
    if (!csv.empty()) {
        std::ofstream out(csv, std::ios::trunc);
        if (!out.good()) fail_data("cannot write " + csv);
        out << "image,factor,method,psnr_db\n" << rows.str();
        KeyValues kv = {{"pairs", join_list(pairs)},
                        {"shave", std::to_string(shave)},
                        {"factor", std::to_string(factor)},
                        {"method", method},
                        {"csv", csv}};
        write_manifest(csv, "eval-psnr", kv);
    }
    return 0;
}

int run_diagnose(const std::string& check, unsigned long long seed, const std::string& csv,
                 int verbosity) {
    const std::vector<std::string> all = {"gradcheck", "etasigma", "mapopt", "posterior"};
    std::vector<std::string> names;
    if (check == "all")
        names = all;
    else if (std::find(all.begin(), all.end(), check) != all.end())
        names = {check};
    else
        throw CliError{kExitUsage, "unknown diagnostic: " + check};

    int exit_code = 0;
    for (const auto& name : names) {
        std::string csv_path;
        if (!csv.empty()) csv_path = names.size() == 1 ? csv : csv + "." + name + ".csv";
        dmrf_diag_result result{};
        const dmrf_status status =
            dmrf_diagnose(name.c_str(), seed, csv_path.empty() ? nullptr : csv_path.c_str(),
                          &result);
        const bool ok = status == DMRF_OK;
        std::cout << name << ": " << (ok ? "PASS" : "FAIL") << " metric=" << result.metric
                  << " threshold=" << result.threshold << "\n";
        if (!ok && status != DMRF_ERR_THRESHOLD) check_status(status);
        if (!ok) exit_code = kExitDiag;
        if (verbosity > 0 && !ok) std::cout << "  " << dmrf_last_error() << "\n";
    }
    if (!csv.empty()) {
        KeyValues kv = {{"check", check}, {"seed", std::to_string(seed)}, {"csv", csv}};
        write_manifest(csv, "diagnose", kv);
    }
    return exit_code;
}

// Splice `--config FILE` key=value pairs in front of the user's flags so the
// command line keeps precedence.
std::vector<std::string> splice_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string cmd, config_path;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw CliError{kExitUsage, "--config expects a path"};
            config_path = args[++i];
        } else if (cmd.empty() && !args[i].empty() && args[i][0] != '-') {
            cmd = args[i];
        } else {
            rest.push_back(args[i]);
        }
    }
    if (config_path.empty()) {
        std::vector<std::string> out;
        if (!cmd.empty()) out.push_back(cmd);
        out.insert(out.end(), rest.begin(), rest.end());
        return out;
    }
    KeyValues kv = read_config(config_path);
    std::vector<std::string> out;
    std::string file_cmd;
    std::vector<std::string> file_args;
    for (const auto& [k, v] : kv) {
        if (k == "command") {
            file_cmd = v;
        } else if (k == "version") {
            continue;
        } else if (k == "inputs" || k == "pairs") {
            file_args.push_back("--" + k);
            for (const auto& item : split_list(v)) file_args.push_back(item);
        } else {
            file_args.push_back("--" + k);
            file_args.push_back(v);
        }
    }
    if (!file_cmd.empty() && !cmd.empty() && file_cmd != cmd)
        throw CliError{kExitUsage,
                       "config command '" + file_cmd + "' disagrees with '" + cmd + "'"};
    out.push_back(cmd.empty() ? file_cmd : cmd);
    out.insert(out.end(), file_args.begin(), file_args.end());
    out.insert(out.end(), rest.begin(), rest.end());
    if (out.empty() || out.front().empty())
        throw CliError{kExitUsage, "no subcommand given (config lacks command=...)"};
    return out;
}

void take_last_everywhere(CLI::App* app) {
    for (CLI::Option* opt : app->get_options())
        opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    for (CLI::App* sub : app->get_subcommands({})) {
        sub->fallthrough();  // parent-level flags (-q) stay usable after the subcommand
        take_last_everywhere(sub);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deep MRF texture synthesis and super-resolution"};
    app.require_subcommand(1);
    int verbosity = 1;
    app.add_flag("-q{0},--quiet{0}", verbosity, "suppress progress output");

    TrainFlags tex_flags, sr_flags;
    std::string tt_input, tt_out;
    auto* tt = app.add_subcommand("train-texture", "train a texture model on one sample image");
    add_train_flags(tt, tex_flags, DMRF_TASK_TEXTURE);
    tt->add_option("--input", tt_input, "sample texture image")->required();
    tt->add_option("--out", tt_out, "checkpoint output path")->required();

    std::string sy_ckpt, sy_size = "64x64", sy_out;
    unsigned long long sy_seed = 0;
    int sy_refine = 0;
    auto* sy = app.add_subcommand("synth", "sample a texture image from a trained model");
    sy->add_option("--ckpt", sy_ckpt, "trained checkpoint")->required();
    sy->add_option("--size", sy_size, "output size HxW");
    sy->add_option("--seed", sy_seed, "sampling seed");
    sy->add_option("--refine", sy_refine, "refinement cycles after the sampling pass");
    sy->add_option("--out", sy_out, "output image (.pgm/.ppm/.png)")->required();

    std::vector<std::string> msd_inputs;
    int msd_factor = 2;
    std::string msd_out_dir;
    auto* msd = app.add_subcommand("make-sr-data", "build low/high luminance pairs from images");
    msd->add_option("--inputs", msd_inputs, "high-resolution source images")->expected(-1);
    msd->add_option("--factor", msd_factor, "upscale factor")->check(CLI::IsMember({2, 3, 4}));
    msd->add_option("--out-dir", msd_out_dir, "output directory")->required();

    std::string tsr_data_dir, tsr_out;
    int tsr_factor = 2;
    auto* tsr = app.add_subcommand("train-sr", "train a super-resolution model on prepared pairs");
    add_train_flags(tsr, sr_flags, DMRF_TASK_SR);
    tsr->add_option("--data-dir", tsr_data_dir, "directory of *_lr/*_hr pairs")->required();
    tsr->add_option("--factor", tsr_factor, "upscale factor")->check(CLI::IsMember({2, 3, 4}));
    tsr->add_option("--out", tsr_out, "checkpoint output path")->required();

    std::string srr_ckpt, srr_input, srr_out;
    int srr_factor = 2;
    auto* srr = app.add_subcommand("sr", "super-resolve an image with a trained model");
    srr->add_option("--ckpt", srr_ckpt, "trained SR checkpoint")->required();
    srr->add_option("--input", srr_input, "low-resolution input image")->required();
    srr->add_option("--factor", srr_factor, "upscale factor")->check(CLI::IsMember({2, 3, 4}));
    srr->add_option("--out", srr_out, "output image")->required();

    std::vector<std::string> ep_pairs;
    int ep_shave = 0, ep_factor = 0;
    std::string ep_method = "model", ep_csv;
    auto* ep = app.add_subcommand("eval-psnr", "PSNR between image pairs");
    ep->add_option("--pairs", ep_pairs, "images: a1 b1 [a2 b2 ...]")->expected(-1);
    ep->add_option("--shave", ep_shave, "border width to shave");
    ep->add_option("--factor", ep_factor, "factor column for the CSV report");
    ep->add_option("--method", ep_method, "method column for the CSV report");
    ep->add_option("--csv", ep_csv, "CSV report path");

    std::string dg_check = "all", dg_check_opt, dg_csv;
    unsigned long long dg_seed = 0;
    auto* dg = app.add_subcommand("diagnose", "run verification instruments");
    dg->add_option("name", dg_check, "gradcheck|etasigma|mapopt|posterior|all");
    dg->add_option("--check", dg_check_opt, "same as the positional name");
    dg->add_option("--seed", dg_seed, "rng seed");
    dg->add_option("--csv", dg_csv, "CSV report path");

    take_last_everywhere(&app);

    try {
        const std::vector<std::string> args = splice_config(argc, argv);
        // CLI11 parses reversed argv-style vectors.
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);

        if (tt->parsed()) return run_train_texture(tex_flags, tt_input, tt_out, verbosity);
        if (sy->parsed()) return run_synth(sy_ckpt, sy_size, sy_seed, sy_refine, sy_out, verbosity);
        if (msd->parsed()) return run_make_sr_data(msd_inputs, msd_factor, msd_out_dir, verbosity);
        if (tsr->parsed()) return run_train_sr(sr_flags, tsr_data_dir, tsr_factor, tsr_out, verbosity);
        if (srr->parsed()) return run_sr(srr_ckpt, srr_input, srr_factor, srr_out, verbosity);
        if (ep->parsed())
            return run_eval_psnr(ep_pairs, ep_shave, ep_factor, ep_method, ep_csv, verbosity);
        if (dg->parsed())
            return run_diagnose(dg_check_opt.empty() ? dg_check : dg_check_opt, dg_seed, dg_csv,
                                verbosity);
        throw CliError{kExitUsage, "no subcommand given"};
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << "\n";
        if (e.code == kExitUsage) std::cerr << app.help() << "\n";
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
