#include "survnn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "survnn/errors.hpp"

namespace survnn {
namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(CensorMode m) {
    switch (m) {
        case CensorMode::None: return "none";
        case CensorMode::MedianHalf: return "median-half";
        case CensorMode::Nodule: return "nodule";
    }
    return "none";
}

CensorMode censor_mode_from_string(const std::string& s) {
    if (s == "none") return CensorMode::None;
    if (s == "median-half") return CensorMode::MedianHalf;
    if (s == "nodule") return CensorMode::Nodule;
    throw ConfigError("unknown censor mode: " + s);
}

void GenConfig::validate() const {
    if (dot_count < 0 || patch_count < 0) throw ConfigError("nodule counts must be nonnegative");
    if (dot_min < 1 || dot_max < dot_min) throw ConfigError("dot size range empty or unordered");
    if (censored_patch_min < 1 || censored_patch_max < censored_patch_min)
        throw ConfigError("censored patch range empty or unordered");
    if (event_patch_min < 1 || event_patch_max < event_patch_min)
        throw ConfigError("event patch range empty or unordered");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(benign_alpha > 0.0)) throw ConfigError("benign alpha must be positive");
    if (dot_white_prob < 0.0 || dot_white_prob > 1.0)
        throw ConfigError("dot white probability must be in [0, 1]");
    if (benign_big_dot_count < 0) throw ConfigError("benign big dot count must be >= 0");
    if (benign_big_dot_count > 0 && (benign_big_min < 1 || benign_big_max < benign_big_min))
        throw ConfigError("benign big dot range is invalid");
    if (!(cancer_prevalence > 0.0 && cancer_prevalence < 1.0))
        throw ConfigError("cancer prevalence must be in (0,1)");
}

double sample_event_time(double phi, Rng& rng) {
    return rng.exponential(std::exp(phi));
}

Dataset gen_sim_ab(const ImageSet& base, const GenConfig& cfg, std::uint64_t seed) {
    const int n = base.count();
    if (n == 0) throw ConfigError("gen_sim_ab: empty base image set");
    if (base.labels.size() != n) throw ConfigError("gen_sim_ab: base images need class labels");
    for (int i = 0; i < n; ++i)
        if (base.labels(i) != 0 && base.labels(i) != 1)
            throw ConfigError("gen_sim_ab: labels must be 0/1 (two classes)");

    Rng rng(seed);
    Dataset ds;
    ds.images = base;
    ds.surv.time.resize(n);
    ds.surv.event = Eigen::VectorXi::Ones(n);
    ds.surv.label = base.labels;
    ds.surv.id.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double phi = base.labels(i) == 0 ? cfg.phi0 : cfg.phi1;
        ds.surv.time(i) = sample_event_time(phi, rng);
        ds.surv.id.push_back("r" + std::to_string(i));
    }

    if (cfg.censor_mode == CensorMode::MedianHalf) {
        for (int cls = 0; cls < 2; ++cls) {
            std::vector<int> members;
            for (int i = 0; i < n; ++i)
                if (base.labels(i) == cls) members.push_back(i);
            if (members.empty()) continue;
            std::vector<double> times;
            times.reserve(members.size());
            for (int i : members) times.push_back(ds.surv.time(i));
            std::sort(times.begin(), times.end());
            // Lower-of-middle-two median so "strictly above" is well defined
            // for even counts.
            const double median = times[(times.size() - 1) / 2];
            std::vector<int> above;
            for (int i : members)
                if (ds.surv.time(i) > median) above.push_back(i);
            // Fisher-Yates, then censor the first floor(half).
            for (std::size_t k = above.size(); k > 1; --k)
                std::swap(above[k - 1], above[static_cast<std::size_t>(
                                            rng.uniform_int(0, static_cast<int>(k) - 1))]);
            for (std::size_t k = 0; k < above.size() / 2; ++k) ds.surv.event(above[k]) = 0;
        }
    } else if (cfg.censor_mode == CensorMode::Nodule) {
        throw ConfigError("gen_sim_ab: nodule censoring belongs to gen_nodule_cifar");
    }
    return ds;
}

namespace {

void paint_square(ImageSet& imgs, int img, int top, int left, int side, float value) {
    for (int ch = 0; ch < imgs.c; ++ch)
        for (int r = top; r < top + side; ++r)
            for (int col = left; col < left + side; ++col)
                imgs.pixels(ch * imgs.h * imgs.w + r * imgs.w + col, img) = value;
}

}  // namespace

Dataset gen_nodule_cifar(const ImageSet& base, const GenConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const int n = base.count();
    if (n == 0) throw ConfigError("gen_nodule_cifar: empty base image set");
    if (cfg.censored_patch_max >= cfg.event_patch_min)
        std::fprintf(stderr,
                     "warning: censored patch range [%d,%d] overlaps event range [%d,%d]\n",
                     cfg.censored_patch_min, cfg.censored_patch_max, cfg.event_patch_min,
                     cfg.event_patch_max);

    Rng rng(seed);
    Dataset ds;
    ds.images = base;
    ds.images.labels.resize(n);
    ds.surv.time.resize(n);
    ds.surv.event.resize(n);
    ds.surv.label.resize(n);
    ds.nodule_size.resize(n);
    ds.surv.id.reserve(static_cast<std::size_t>(n));

    const int h = base.h, w = base.w;
    for (int i = 0; i < n; ++i) {
        ds.surv.id.push_back("r" + std::to_string(i));
        const bool cancer = rng.bernoulli(cfg.cancer_prevalence);

        // Benign dots on every image, black or white.
        int dot_max_size = 0;
        for (int d = 0; d < cfg.dot_count; ++d) {
            const int side = rng.uniform_int(cfg.dot_min, cfg.dot_max);
            const int top = rng.uniform_int(0, h - side);
            const int left = rng.uniform_int(0, w - side);
            const bool white = rng.bernoulli(cfg.dot_white_prob);
            paint_square(ds.images, i, top, left, side, white ? 1.0f : 0.0f);
            dot_max_size = std::max(dot_max_size, side);
        }

        double size;
        if (cancer) {
            const bool event = rng.bernoulli(cfg.cancer_event_rate);
            const int lo = event ? cfg.event_patch_min : cfg.censored_patch_min;
            const int hi = event ? cfg.event_patch_max : cfg.censored_patch_max;
            int patch_max = 0;
            for (int p = 0; p < cfg.patch_count; ++p) {
                const int side = rng.uniform_int(lo, hi);
                const int top = rng.uniform_int(0, h - side);
                const int left = rng.uniform_int(0, w - side);
                paint_square(ds.images, i, top, left, side, 1.0f);
                patch_max = std::max(patch_max, side);
            }
            size = std::max(patch_max, dot_max_size);
            ds.surv.event(i) = event ? 1 : 0;
            ds.surv.label(i) = 1;
        } else {
            int big_max = 0;
            for (int b = 0; b < cfg.benign_big_dot_count; ++b) {
                const int side = rng.uniform_int(cfg.benign_big_min, cfg.benign_big_max);
                const int top = rng.uniform_int(0, h - side);
                const int left = rng.uniform_int(0, w - side);
                paint_square(ds.images, i, top, left, side, 1.0f);
                big_max = std::max(big_max, side);
            }
            size = std::max(dot_max_size, big_max);
            ds.surv.event(i) = 0;
            ds.surv.label(i) = 0;
        }
        ds.nodule_size(i) = size;
        ds.surv.time(i) = sample_event_time((cancer ? cfg.alpha : cfg.benign_alpha) * size, rng);
        ds.images.labels(i) = ds.surv.label(i);
    }
    return ds;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path, std::size_t offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in)
        throw IoError(path + ": truncated at byte offset " + std::to_string(offset));
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t count,
                                        const std::string& path, std::size_t offset) {
    std::vector<unsigned char> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count)
        throw IoError(path + ": truncated payload at byte offset " +
                      std::to_string(offset + static_cast<std::size_t>(std::max<std::streamsize>(
                                                  in.gcount(), 0))));
    return buf;
}

}  // namespace

ImageSet load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    const std::uint32_t magic = read_be32(in, path, 0);
    if (magic != 0x00000803u)
        throw IoError(path + ": bad image magic at byte offset 0 (got 0x" +
                      [&] { char b[16]; std::snprintf(b, sizeof b, "%08x", magic); return std::string(b); }() + ")");
    const std::uint32_t n = read_be32(in, path, 4);
    const std::uint32_t rows = read_be32(in, path, 8);
    const std::uint32_t cols = read_be32(in, path, 12);
    const auto buf = read_payload(in, std::size_t(n) * rows * cols, path, 16);

    ImageSet out;
    out.h = static_cast<int>(rows);
    out.w = static_cast<int>(cols);
    out.c = 1;
    out.pixels.resize(static_cast<Eigen::Index>(rows * cols), static_cast<Eigen::Index>(n));
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t p = 0; p < rows * cols; ++p)
            out.pixels(p, i) = static_cast<float>(buf[std::size_t(i) * rows * cols + p]) / 255.0f;
    return out;
}

Eigen::VectorXi load_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    const std::uint32_t magic = read_be32(in, path, 0);
    if (magic != 0x00000801u)
        throw IoError(path + ": bad label magic at byte offset 0");
    const std::uint32_t n = read_be32(in, path, 4);
    const auto buf = read_payload(in, n, path, 8);
    Eigen::VectorXi labels(static_cast<Eigen::Index>(n));
    for (std::uint32_t i = 0; i < n; ++i) labels(i) = buf[i];
    return labels;
}

ImageSet load_cifar_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + path);
    const std::size_t bytes = static_cast<std::size_t>(in.tellg());
    constexpr std::size_t record = 3073;
    if (bytes == 0 || bytes % record != 0)
        throw IoError(path + ": size " + std::to_string(bytes) +
                      " is not a positive multiple of 3073");
    const std::size_t n = bytes / record;
    in.seekg(0);
    std::vector<unsigned char> buf(bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError(path + ": short read");

    ImageSet out;
    out.h = 32;
    out.w = 32;
    out.c = 3;
    out.pixels.resize(3 * 1024, static_cast<Eigen::Index>(n));
    out.labels.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec = buf.data() + i * record;
        out.labels(static_cast<Eigen::Index>(i)) = rec[0];
        for (int p = 0; p < 3 * 1024; ++p)
            out.pixels(p, static_cast<Eigen::Index>(i)) = static_cast<float>(rec[1 + p]) / 255.0f;
    }
    return out;
}

ImageSet synth_base_images(SynthKind kind, int n, std::uint64_t seed) {
    if (n <= 0) throw ConfigError("synth_base_images: n must be positive");
    Rng rng(seed);
    ImageSet out;
    if (kind == SynthKind::Noise32) {
        out.h = 32;
        out.w = 32;
        out.c = 3;
        out.pixels.resize(3 * 1024, n);
        for (int i = 0; i < n; ++i)
            for (int p = 0; p < 3 * 1024; ++p)
                out.pixels(p, i) = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
        return out;
    }

    // Two-class shapes: hollow circles (class 0) vs vertical bars (class 1).
    out.h = 28;
    out.w = 28;
    out.c = 1;
    out.pixels = Eigen::MatrixXf::Zero(28 * 28, n);
    out.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        const int cls = rng.uniform_int(0, 1);
        out.labels(i) = cls;
        const double cy = 13.5 + rng.uniform(-2.0, 2.0);
        const double cx = 13.5 + rng.uniform(-2.0, 2.0);
        if (cls == 0) {
            const double radius = rng.uniform(6.0, 9.0);
            const double thick = rng.uniform(1.2, 2.2);
            for (int r = 0; r < 28; ++r)
                for (int col = 0; col < 28; ++col) {
                    const double dist = std::hypot(r - cy, col - cx);
                    if (std::abs(dist - radius) < thick) {
                        const int v = rng.uniform_int(160, 255);
                        out.pixels(r * 28 + col, i) = static_cast<float>(v) / 255.0f;
                    }
                }
        } else {
            const int width = rng.uniform_int(2, 4);
            const int left = static_cast<int>(cx) - width / 2;
            const int top = rng.uniform_int(2, 6);
            const int bottom = 27 - rng.uniform_int(2, 6);
            for (int r = top; r <= bottom; ++r)
                for (int col = std::max(0, left); col < std::min(28, left + width); ++col) {
                    const int v = rng.uniform_int(160, 255);
                    out.pixels(r * 28 + col, i) = static_cast<float>(v) / 255.0f;
                }
        }
    }
    return out;
}

void save_dataset(const std::string& dir, const Dataset& ds, const GenConfig& cfg) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    const int n = ds.images.count();
    const int dim = ds.images.dim();

    std::ofstream rec(fs::path(dir) / "records.tsv");
    if (!rec) throw IoError("cannot write records.tsv in " + dir);
    rec << "id\ttime\tevent\tlabel\tnodule_size\toffset\n";
    char buf[64];
    for (int i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", ds.surv.time(i));
        rec << (ds.surv.id.empty() ? "r" + std::to_string(i) : ds.surv.id[static_cast<std::size_t>(i)])
            << '\t' << buf << '\t' << ds.surv.event(i) << '\t'
            << (ds.surv.label.size() ? ds.surv.label(i) : 0) << '\t';
        std::snprintf(buf, sizeof buf, "%.17g",
                      ds.nodule_size.size() ? ds.nodule_size(i) : 0.0);
        rec << buf << '\t' << static_cast<long long>(i) * dim << '\n';
    }

    std::ofstream blob(fs::path(dir) / "images.u8", std::ios::binary);
    if (!blob) throw IoError("cannot write images.u8 in " + dir);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(dim));
    for (int i = 0; i < n; ++i) {
        for (int p = 0; p < dim; ++p)
            bytes[static_cast<std::size_t>(p)] =
                static_cast<unsigned char>(std::lround(ds.images.pixels(p, i) * 255.0f));
        blob.write(reinterpret_cast<const char*>(bytes.data()), dim);
    }

    json meta{{"n", n},
              {"h", ds.images.h},
              {"w", ds.images.w},
              {"c", ds.images.c},
              {"seed", cfg.seed},
              {"phi0", cfg.phi0},
              {"phi1", cfg.phi1},
              {"censor_mode", to_string(cfg.censor_mode)},
              {"cancer_prevalence", cfg.cancer_prevalence},
              {"cancer_event_rate", cfg.cancer_event_rate},
              {"dot_count", cfg.dot_count},
              {"dot_min", cfg.dot_min},
              {"dot_max", cfg.dot_max},
              {"patch_count", cfg.patch_count},
              {"censored_patch_min", cfg.censored_patch_min},
              {"censored_patch_max", cfg.censored_patch_max},
              {"event_patch_min", cfg.event_patch_min},
              {"event_patch_max", cfg.event_patch_max},
              {"benign_big_dot_count", cfg.benign_big_dot_count},
              {"benign_big_min", cfg.benign_big_min},
              {"benign_big_max", cfg.benign_big_max},
              {"alpha", cfg.alpha},
              {"benign_alpha", cfg.benign_alpha}};
    std::ofstream mj(fs::path(dir) / "meta.json");
    mj << meta.dump(2) << '\n';
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream mj(fs::path(dir) / "meta.json");
    if (!mj) throw IoError("cannot open meta.json in " + dir);
    json meta = json::parse(mj, nullptr, false);
    if (meta.is_discarded()) throw IoError("malformed meta.json in " + dir);

    Dataset ds;
    const int n = meta.at("n").get<int>();
    ds.images.h = meta.at("h").get<int>();
    ds.images.w = meta.at("w").get<int>();
    ds.images.c = meta.at("c").get<int>();
    const int dim = ds.images.dim();

    ds.surv.time.resize(n);
    ds.surv.event.resize(n);
    ds.surv.label.resize(n);
    ds.nodule_size.resize(n);
    ds.surv.id.reserve(static_cast<std::size_t>(n));

    std::ifstream rec(fs::path(dir) / "records.tsv");
    if (!rec) throw IoError("cannot open records.tsv in " + dir);
    std::string header;
    std::getline(rec, header);
    for (int i = 0; i < n; ++i) {
        std::string id;
        double time, size;
        int event, label;
        long long offset;
        if (!(rec >> id >> time >> event >> label >> size >> offset))
            throw IoError(dir + "/records.tsv: truncated at record " + std::to_string(i));
        ds.surv.id.push_back(id);
        ds.surv.time(i) = time;
        ds.surv.event(i) = event;
        ds.surv.label(i) = label;
        ds.nodule_size(i) = size;
    }

    std::ifstream blob(fs::path(dir) / "images.u8", std::ios::binary);
    if (!blob) throw IoError("cannot open images.u8 in " + dir);
    ds.images.pixels.resize(dim, n);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(dim));
    for (int i = 0; i < n; ++i) {
        blob.read(reinterpret_cast<char*>(bytes.data()), dim);
        if (!blob) throw IoError(dir + "/images.u8: truncated at image " + std::to_string(i));
        for (int p = 0; p < dim; ++p)
            ds.images.pixels(p, i) = static_cast<float>(bytes[static_cast<std::size_t>(p)]) / 255.0f;
    }
    ds.images.labels = ds.surv.label;
    return ds;
}

}  // namespace survnn
