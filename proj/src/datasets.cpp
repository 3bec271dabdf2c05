#include "trd/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "trd/image_io.hpp"
#include "trd/ops.hpp"
#include "trd/random.hpp"

namespace fs = std::filesystem;

namespace trd {

void ToyConfig::validate() const {
    if (resolution < 32 || resolution % 32 != 0)
        throw ConfigError("toy config: resolution must be a positive multiple of 32");
    if (n_train < 1 || n_val < 1 || n_test < 1) throw ConfigError("toy config: sample counts must be positive");
    double mix_sum = 0.0;
    for (double p : anomaly_modality_mix) {
        if (p < 0.0) throw ConfigError("toy config: anomaly modality mix probabilities must be non-negative");
        mix_sum += p;
    }
    if (std::abs(mix_sum - 1.0) > 1e-9) throw ConfigError("toy config: anomaly modality mix must sum to 1");
    if (!(anomaly_fraction > 0.0 && anomaly_fraction <= 1.0))
        throw ConfigError("toy config: anomaly fraction must be in (0, 1]");
    if (!(blob_radius_min >= 2.0 && blob_radius_max >= blob_radius_min))
        throw ConfigError("toy config: blob radius range is invalid");
}

Tensor normalize_image(const Tensor& chw01, const Normalization& norm) {
    if (chw01.ndim() != 3 || chw01.dim(0) != 3) throw DimensionError("normalize_image: expected 3xHxW tensor");
    Tensor out(chw01.shape());
    const std::int64_t plane = static_cast<std::int64_t>(chw01.dim(1)) * chw01.dim(2);
    for (int c = 0; c < 3; ++c)
        for (std::int64_t i = 0; i < plane; ++i)
            out[c * plane + i] = (chw01[c * plane + i] - norm.mean[static_cast<size_t>(c)]) / norm.stddev[static_cast<size_t>(c)];
    return out;
}

Tensor resize_chw(const Tensor& chw, int resolution) {
    if (chw.ndim() != 3) throw DimensionError("resize_chw: expected CHW tensor");
    if (chw.dim(1) == resolution && chw.dim(2) == resolution) return chw;
    Tensor out({chw.dim(0), resolution, resolution});
    const std::int64_t in_plane = static_cast<std::int64_t>(chw.dim(1)) * chw.dim(2);
    const std::int64_t out_plane = static_cast<std::int64_t>(resolution) * resolution;
    for (int c = 0; c < chw.dim(0); ++c) {
        Tensor channel({chw.dim(1), chw.dim(2)});
        std::copy(chw.data() + c * in_plane, chw.data() + (c + 1) * in_plane, channel.data());
        Tensor resized = ops::bilinear_resize_hw(channel, resolution, resolution);
        std::copy(resized.data(), resized.data() + out_plane, out.data() + c * out_plane);
    }
    return out;
}

namespace {

Tensor nearest_resize_hw(const Tensor& m, int out_h, int out_w) {
    const int H = m.dim(0), W = m.dim(1);
    if (H == out_h && W == out_w) return m;
    Tensor out({out_h, out_w});
    for (int i = 0; i < out_h; ++i) {
        const int si = std::min(H - 1, static_cast<int>((i + 0.5) * H / out_h));
        for (int j = 0; j < out_w; ++j) {
            const int sj = std::min(W - 1, static_cast<int>((j + 0.5) * W / out_w));
            out.at(i, j) = m.at(si, sj);
        }
    }
    return out;
}

}  // namespace

Tensor preprocess_depth(const Tensor& raw_hw, int resolution) {
    if (raw_hw.ndim() != 2) throw DimensionError("preprocess_depth: expected HxW grid");
    std::vector<double> valid;
    valid.reserve(static_cast<size_t>(raw_hw.size()));
    for (std::int64_t i = 0; i < raw_hw.size(); ++i) {
        const double v = raw_hw[i];
        if (std::isfinite(v) && v > 0.0) valid.push_back(v);
    }
    if (valid.empty()) throw IngestionError("preprocess_depth: depth image has no valid readings");
    std::sort(valid.begin(), valid.end());
    const size_t n = valid.size();
    const double median = (n % 2 == 1) ? valid[n / 2] : 0.5 * (valid[n / 2 - 1] + valid[n / 2]);

    Tensor filled(raw_hw.shape());
    double lo = valid.front(), hi = valid.back();
    for (std::int64_t i = 0; i < raw_hw.size(); ++i) {
        const double v = raw_hw[i];
        filled[i] = (std::isfinite(v) && v > 0.0) ? v : median;
    }
    const double range = hi - lo;
    for (std::int64_t i = 0; i < filled.size(); ++i) filled[i] = range > 0.0 ? (filled[i] - lo) / range : 0.0;

    Tensor resized = ops::bilinear_resize_hw(filled, resolution, resolution);
    Tensor out({3, resolution, resolution});
    const std::int64_t plane = static_cast<std::int64_t>(resolution) * resolution;
    for (int c = 0; c < 3; ++c) std::copy(resized.data(), resized.data() + plane, out.data() + c * plane);
    return out;
}

// ---- toy generator -----------------------------------------------------------

namespace {

struct SmoothField {
    std::array<double, 4> fx{}, fy{}, phase{}, amp{};
    void init(Rng& rng) {
        for (int k = 0; k < 4; ++k) {
            fx[static_cast<size_t>(k)] = rng.uniform(0.5, 2.5);
            fy[static_cast<size_t>(k)] = rng.uniform(0.5, 2.5);
            phase[static_cast<size_t>(k)] = rng.uniform(0.0, 6.283185307179586);
            amp[static_cast<size_t>(k)] = 1.0 / (k + 1);
        }
    }
    double at(double x, double y, int res) const {
        double s = 0.0, total = 0.0;
        for (int k = 0; k < 4; ++k) {
            s += amp[static_cast<size_t>(k)] *
                 std::sin(6.283185307179586 * (fx[static_cast<size_t>(k)] * x / res + fy[static_cast<size_t>(k)] * y / res) +
                          phase[static_cast<size_t>(k)]);
            total += amp[static_cast<size_t>(k)];
        }
        return s / total;
    }
};

double smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// class index j among the anomalous ordinals, greedy largest-remainder quota
int modality_class_of(int ordinal, const std::array<double, 3>& mix) {
    std::array<int, 3> assigned{0, 0, 0};
    int cls = 0;
    for (int j = 0; j <= ordinal; ++j) {
        double best = -1.0;
        cls = 0;
        for (int k = 0; k < 3; ++k) {
            const double want = mix[static_cast<size_t>(k)] * (j + 1) - assigned[static_cast<size_t>(k)];
            if (want > best + 1e-12) {
                best = want;
                cls = k;
            }
        }
        assigned[static_cast<size_t>(cls)] += 1;
    }
    return cls;
}

bool is_anomalous_index(int index, double fraction) {
    return std::floor((index + 1) * fraction) > std::floor(index * fraction);
}

int anomaly_ordinal(int index, double fraction) {
    return static_cast<int>(std::floor(index * fraction));
}

}  // namespace

MultimodalSample make_toy_sample(const ToyConfig& cfg, const std::string& split, int index, bool force_normal) {
    cfg.validate();
    const int res = cfg.resolution;
    Rng rng(derive_seed(cfg.seed, split + "/base", static_cast<std::uint64_t>(index)));

    SmoothField s0, s1, s2;
    s0.init(rng);
    s1.init(rng);
    s2.init(rng);
    const double jitter = rng.uniform(-1.0, 1.0);

    const double cx = (res - 1) / 2.0, cy = (res - 1) / 2.0;
    const double R = 0.36 * res;
    const std::array<double, 3> bg = {0.12, 0.13, 0.16};
    const std::array<double, 3> base = {0.55, 0.42, 0.34};

    Tensor color({3, res, res});
    Tensor height({res, res});
    const std::int64_t plane = static_cast<std::int64_t>(res) * res;
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            const double d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy)) / R;
            const double obj = smoothstep01((1.0 - d) / 0.08);
            const double v0 = s0.at(x, y, res), v1 = s1.at(x, y, res), v2 = s2.at(x, y, res);
            const std::array<double, 3> tex = {v1, v2, 0.5 * (v1 + v2)};
            for (int c = 0; c < 3; ++c) {
                double v = bg[static_cast<size_t>(c)] +
                           obj * (base[static_cast<size_t>(c)] - bg[static_cast<size_t>(c)] + 0.10 * v0 +
                                  0.05 * tex[static_cast<size_t>(c)] + 0.03 * jitter);
                color[c * plane + y * static_cast<std::int64_t>(res) + x] = std::clamp(v, 0.0, 1.0);
            }
            const double dome = std::sqrt(std::max(0.0, 1.0 - d * d));
            height.at(y, x) = obj * (0.55 * dome + 0.10 * v0 + 0.02 * jitter) + (1.0 - obj) * 0.015 * (1.0 + v2);
        }
    }
    // exact [0,1] span so per-image min-max at load time is an identity
    const double lo = height.min_value(), hi = height.max_value();
    for (std::int64_t i = 0; i < height.size(); ++i) height[i] = (height[i] - lo) / (hi - lo);

    MultimodalSample sample;
    sample.category = "toy";
    sample.split = split;
    sample.index = index;
    sample.defect = "good";
    sample.label = Label::kNormal;
    sample.anomaly_modality = AnomalyModality::kNone;

    const bool anomalous = split == "test" && !force_normal && is_anomalous_index(index, cfg.anomaly_fraction);
    if (anomalous) {
        Rng arng(derive_seed(cfg.seed, split + "/anomaly", static_cast<std::uint64_t>(index)));
        const double theta = arng.uniform(0.0, 6.283185307179586);
        const double rr = 0.55 * R * std::sqrt(arng.uniform());
        const double bx = cx + rr * std::cos(theta), by = cy + rr * std::sin(theta);
        const double rho = arng.uniform(cfg.blob_radius_min, cfg.blob_radius_max);
        // graded difficulty: nominal amplitude 0.5 of the dynamic range,
        // drawn down to roughly half of it per sample
        const double amplitude = arng.uniform(0.28, 0.5);
        std::array<double, 3> dir{};
        do {
            for (double& v : dir) v = arng.uniform(-1.0, 1.0);
        } while (std::max({std::abs(dir[0]), std::abs(dir[1]), std::abs(dir[2])}) < 0.3);
        const double mx = std::max({std::abs(dir[0]), std::abs(dir[1]), std::abs(dir[2])});
        for (double& v : dir) v /= mx;
        const double center_h = height.at(static_cast<int>(std::lround(std::clamp(by, 0.0, res - 1.0))),
                                          static_cast<int>(std::lround(std::clamp(bx, 0.0, res - 1.0))));
        const double sign = center_h > 0.55 ? -1.0 : 1.0;

        const int cls = modality_class_of(anomaly_ordinal(index, cfg.anomaly_fraction), cfg.anomaly_modality_mix);
        const bool hit_2d = cls == 0 || cls == 2;
        const bool hit_3d = cls == 1 || cls == 2;

        Tensor mask({res, res});
        for (int y = 0; y < res; ++y) {
            for (int x = 0; x < res; ++x) {
                const double dist = std::sqrt((x - bx) * (x - bx) + (y - by) * (y - by));
                if (dist > rho) continue;
                mask.at(y, x) = 1.0;
                const double w = 0.5 * (1.0 + std::cos(3.141592653589793 * dist / rho));
                if (hit_3d) height.at(y, x) = std::clamp(height.at(y, x) + sign * amplitude * w, 0.0, 1.0);
                if (hit_2d)
                    for (int c = 0; c < 3; ++c) {
                        const std::int64_t i = c * plane + y * static_cast<std::int64_t>(res) + x;
                        color[i] = std::clamp(color[i] + amplitude * dir[static_cast<size_t>(c)] * w, 0.0, 1.0);
                    }
            }
        }
        sample.label = Label::kAnomalous;
        sample.mask = std::move(mask);
        sample.defect = cls == 0 ? "blob2d" : cls == 1 ? "blob3d" : "blobboth";
        sample.anomaly_modality = cls == 0   ? AnomalyModality::k2DOnly
                                  : cls == 1 ? AnomalyModality::k3DOnly
                                             : AnomalyModality::kBoth;
    } else if (split == "test") {
        sample.mask = Tensor({res, res});
    }

    const Normalization norm = toy_normalization();
    sample.image_2d = normalize_image(color, norm);
    sample.image_3d = normalize_image(preprocess_depth(height, res), norm);
    return sample;
}

ToyDataset generate_toy(const ToyConfig& cfg) {
    cfg.validate();
    ToyDataset ds;
    for (int i = 0; i < cfg.n_train; ++i) ds.train.push_back(make_toy_sample(cfg, "train", i));
    for (int i = 0; i < cfg.n_val; ++i) ds.val.push_back(make_toy_sample(cfg, "validation", i));
    for (int i = 0; i < cfg.n_test; ++i) ds.test.push_back(make_toy_sample(cfg, "test", i));
    return ds;
}

// ---- persistence ---------------------------------------------------------------

namespace {

std::string index_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03d", index);
    return buf;
}

// toy tensors are normalized with mean/std 0.5; invert for 8-bit export
Tensor denormalize_toy(const Tensor& chw) {
    Tensor out(chw.shape());
    for (std::int64_t i = 0; i < chw.size(); ++i) out[i] = std::clamp(chw[i] * 0.5 + 0.5, 0.0, 1.0);
    return out;
}

}  // namespace

void save_toy(const ToyDataset& ds, const std::string& out_dir) {
    auto write_split = [&](const std::vector<MultimodalSample>& samples) {
        for (const MultimodalSample& s : samples) {
            const fs::path defect_dir = fs::path(out_dir) / s.category / s.split / s.defect;
            fs::create_directories(defect_dir / "rgb");
            fs::create_directories(defect_dir / "depth");
            const std::string name = index_name(s.index);
            save_image_rgb((defect_dir / "rgb" / (name + ".png")).string(), denormalize_toy(s.image_2d));
            // the depth companion stores the first channel of the [0,1] grid
            const Tensor depth01 = denormalize_toy(s.image_3d);
            Tensor grid({depth01.dim(1), depth01.dim(2)});
            std::copy(depth01.data(), depth01.data() + grid.size(), grid.data());
            save_depth16((defect_dir / "depth" / (name + ".png")).string(), grid);
            if (s.split == "test" && s.defect != "good") {
                fs::create_directories(defect_dir / "gt");
                save_mask((defect_dir / "gt" / (name + ".png")).string(), s.mask);
            }
        }
    };
    write_split(ds.train);
    write_split(ds.val);
    write_split(ds.test);
}

std::vector<MultimodalSample> load_samples(const std::string& root, const std::string& category,
                                           const std::string& split, int resolution, const Normalization& norm) {
    const fs::path split_dir = fs::path(root) / category / split;
    if (!fs::is_directory(split_dir)) throw IngestionError("dataset split directory not found: " + split_dir.string());

    std::vector<std::string> defects;
    for (const auto& e : fs::directory_iterator(split_dir))
        if (e.is_directory()) defects.push_back(e.path().filename().string());
    std::sort(defects.begin(), defects.end());
    if (defects.empty()) throw IngestionError("no defect folders under " + split_dir.string());

    std::vector<MultimodalSample> out;
    for (const std::string& defect : defects) {
        const fs::path defect_dir = split_dir / defect;
        const fs::path rgb_dir = defect_dir / "rgb";
        if (!fs::is_directory(rgb_dir)) throw IngestionError("missing rgb directory: " + rgb_dir.string());

        std::vector<std::string> stems;
        for (const auto& e : fs::directory_iterator(rgb_dir))
            if (e.is_regular_file()) stems.push_back(e.path().stem().string());
        std::sort(stems.begin(), stems.end());

        for (const std::string& stem : stems) {
            MultimodalSample s;
            s.category = category;
            s.split = split;
            s.defect = defect;
            s.index = static_cast<int>(out.size());
            s.label = defect == "good" ? Label::kNormal : Label::kAnomalous;
            s.anomaly_modality = defect == "good"       ? AnomalyModality::kNone
                                 : defect == "blob2d"   ? AnomalyModality::k2DOnly
                                 : defect == "blob3d"   ? AnomalyModality::k3DOnly
                                 : defect == "blobboth" ? AnomalyModality::kBoth
                                                        : AnomalyModality::kUnknown;

            fs::path rgb_path;
            for (const char* ext : {".png", ".jpg", ".jpeg", ".bmp"}) {
                fs::path p = rgb_dir / (stem + ext);
                if (fs::exists(p)) {
                    rgb_path = p;
                    break;
                }
            }
            if (rgb_path.empty()) throw IngestionError("missing rgb file for stem " + stem + " in " + rgb_dir.string());
            s.image_2d = normalize_image(resize_chw(load_image_rgb(rgb_path.string()), resolution), norm);

            fs::path companion;
            for (const char* dir : {"depth", "xyz", "normal"}) {
                for (const char* ext : {".png", ".tiff", ".tif", ".exr"}) {
                    fs::path p = defect_dir / dir / (stem + ext);
                    if (fs::exists(p)) {
                        companion = p;
                        break;
                    }
                }
                if (!companion.empty()) break;
            }
            if (companion.empty())
                throw IngestionError("missing depth companion for " + rgb_path.string() + " (expected under " +
                                     (defect_dir / "depth").string() + ", " + (defect_dir / "xyz").string() + " or " +
                                     (defect_dir / "normal").string() + ")");
            auto [kind, data] = load_companion(companion.string());
            s.image_3d = kind == CompanionKind::kImage3Ch
                             ? normalize_image(resize_chw(data, resolution), norm)
                             : normalize_image(preprocess_depth(data, resolution), norm);

            if (split == "test") {
                if (defect == "good") {
                    s.mask = Tensor({resolution, resolution});
                } else {
                    fs::path gt;
                    for (const char* ext : {".png", ".bmp"}) {
                        fs::path p = defect_dir / "gt" / (stem + ext);
                        if (fs::exists(p)) {
                            gt = p;
                            break;
                        }
                    }
                    if (gt.empty())
                        throw IngestionError("missing gt mask for " + rgb_path.string() + " (expected under " +
                                             (defect_dir / "gt").string() + ")");
                    s.mask = nearest_resize_hw(load_mask(gt.string()), resolution, resolution);
                }
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

MultimodalSample load_sample_pair(const std::string& rgb_path, const std::string& companion_path, int resolution,
                                  const Normalization& norm) {
    MultimodalSample s;
    s.category = "adhoc";
    s.split = "infer";
    s.defect = "unknown";
    s.image_2d = normalize_image(resize_chw(load_image_rgb(rgb_path), resolution), norm);
    auto [kind, data] = load_companion(companion_path);
    s.image_3d = kind == CompanionKind::kImage3Ch ? normalize_image(resize_chw(data, resolution), norm)
                                                  : normalize_image(preprocess_depth(data, resolution), norm);
    return s;
}

}  // namespace trd
