#include "acr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "acr/rng.hpp"

namespace acr {

std::vector<std::vector<std::size_t>> TaskStream::classes_per_task(
        std::size_t upto) const {
    if (upto > tasks.size()) {
        throw std::out_of_range("classes_per_task: " + std::to_string(upto) +
                                " tasks requested, stream has " +
                                std::to_string(tasks.size()));
    }
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < upto; ++i) out.push_back(tasks[i].classes);
    return out;
}

std::size_t TaskStream::total_classes() const {
    std::size_t n = 0;
    for (const Task& t : tasks) n += t.classes.size();
    return n;
}

namespace {

void check_stream_args(std::size_t tasks, std::size_t classes_per_task,
                       std::size_t samples_per_class) {
    if (tasks == 0 || classes_per_task == 0 || samples_per_class == 0) {
        throw std::invalid_argument("stream: tasks, classes and samples must be positive");
    }
    if (classes_per_task > (std::size_t{1} << 31) / tasks) {
        throw std::invalid_argument("stream: class count overflows the label space");
    }
}

// 80/20 split by position within the class's generation order.
void split_class(std::vector<Sample>&& generated, Task& task) {
    const std::size_t n_test = std::max<std::size_t>(1, generated.size() / 5);
    const std::size_t n_train = generated.size() - n_test;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        (i < n_train ? task.train : task.test).push_back(std::move(generated[i]));
    }
}

}  // namespace

TaskStream make_synthetic_stream(std::size_t tasks, std::size_t classes_per_task,
                                 std::size_t samples_per_class, std::size_t dim,
                                 std::uint32_t seed, double margin) {
    check_stream_args(tasks, classes_per_task, samples_per_class);
    if (dim == 0) throw std::invalid_argument("make_synthetic_stream: zero dim");
    if (margin < 0.0) throw std::invalid_argument("make_synthetic_stream: negative margin");

    const std::size_t n_classes = tasks * classes_per_task;
    std::mt19937 center_rng = seeded_rng(seed, "blob-centers");
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<std::vector<double>> centers(n_classes, std::vector<double>(dim));
    for (auto& center : centers) {
        double norm_sq = 0.0;
        for (double& c : center) {
            c = unit(center_rng);
            norm_sq += c * c;
        }
        const double norm = std::max(std::sqrt(norm_sq), 1e-12);
        for (double& c : center) c = c / norm * margin;
    }

    TaskStream stream;
    stream.kind = InputKind::Vector;
    stream.dim = dim;
    std::size_t next_id = 0;
    for (std::size_t t = 0; t < tasks; ++t) {
        Task task;
        task.id = t;
        for (std::size_t c = 0; c < classes_per_task; ++c) {
            const std::size_t cls = t * classes_per_task + c;
            task.classes.push_back(cls);
            std::mt19937 rng = seeded_rng(seed, "blob-" + std::to_string(cls));
            std::vector<Sample> generated;
            for (std::size_t i = 0; i < samples_per_class; ++i) {
                Sample s;
                s.id = next_id++;
                s.label = cls;
                s.task_id = t;
                s.features.resize(dim);
                for (std::size_t d = 0; d < dim; ++d) {
                    s.features[d] = centers[cls][d] + unit(rng);
                }
                generated.push_back(std::move(s));
            }
            split_class(std::move(generated), task);
        }
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

struct GlyphParams {
    int kind = 0;  // 0 disk, 1 ring, 2 bar, 3 cross
    double cx = 0, cy = 0, r = 0, theta = 0, intensity = 0;
};

double bar_distance(double px, double py, double theta, double half_len) {
    const double dx = std::cos(theta), dy = std::sin(theta);
    double t = px * dx + py * dy;
    t = std::clamp(t, -half_len, half_len);
    const double ex = px - t * dx, ey = py - t * dy;
    return std::sqrt(ex * ex + ey * ey);
}

std::vector<double> render_glyph(const GlyphParams& p, std::size_t side) {
    const double soft = 0.6;
    const double ring_w = std::max(0.8, 0.08 * static_cast<double>(side));
    const double bar_w = std::max(0.9, 0.09 * static_cast<double>(side));
    std::vector<double> img(side * side);
    for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
            const double px = static_cast<double>(x) - p.cx;
            const double py = static_cast<double>(y) - p.cy;
            const double dist = std::sqrt(px * px + py * py);
            double sd = 0.0;
            switch (p.kind) {
                case 0: sd = p.r - dist; break;
                case 1: sd = ring_w - std::abs(dist - p.r); break;
                case 2: sd = bar_w - bar_distance(px, py, p.theta, p.r); break;
                default:
                    sd = bar_w - std::min(bar_distance(px, py, p.theta, p.r),
                                          bar_distance(px, py, p.theta + 1.5707963267948966,
                                                       p.r));
            }
            img[y * side + x] = std::clamp(p.intensity * sigmoid(sd / soft), 0.0, 1.0);
        }
    }
    return img;
}

}  // namespace

TaskStream make_image_stream(std::size_t tasks, std::size_t classes_per_task,
                             std::size_t side, std::uint32_t seed,
                             std::size_t samples_per_class, double jitter,
                             double outlier_fraction) {
    check_stream_args(tasks, classes_per_task, samples_per_class);
    if (side < 8) {
        throw std::invalid_argument("make_image_stream: side " + std::to_string(side) +
                                    " below the minimum of 8");
    }
    if (jitter < 0.0 || outlier_fraction < 0.0 || outlier_fraction > 1.0) {
        throw std::invalid_argument("make_image_stream: bad jitter or outlier fraction");
    }

    const double fside = static_cast<double>(side);
    TaskStream stream;
    stream.kind = InputKind::Image;
    stream.dim = side * side;
    stream.side = side;
    std::size_t next_id = 0;
    for (std::size_t t = 0; t < tasks; ++t) {
        Task task;
        task.id = t;
        for (std::size_t c = 0; c < classes_per_task; ++c) {
            const std::size_t cls = t * classes_per_task + c;
            task.classes.push_back(cls);

            std::mt19937 prm = seeded_rng(seed, "glyph-" + std::to_string(cls));
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            GlyphParams base;
            base.kind = static_cast<int>(cls % 4);
            base.cx = fside / 2.0 + (u01(prm) - 0.5) * fside / 3.0;
            base.cy = fside / 2.0 + (u01(prm) - 0.5) * fside / 3.0;
            base.r = fside / 5.0 + u01(prm) * (fside / 3.0 - fside / 5.0);
            base.theta = u01(prm) * 3.141592653589793;
            base.intensity = 0.65 + u01(prm) * 0.35;

            std::mt19937 rng = seeded_rng(seed, "pixels-" + std::to_string(cls));
            std::normal_distribution<double> gauss(0.0, 1.0);
            std::vector<Sample> generated;
            for (std::size_t i = 0; i < samples_per_class; ++i) {
                const bool outlier = u01(rng) < outlier_fraction;
                const double js = jitter * (outlier ? 4.0 : 1.0);
                GlyphParams p = base;
                p.cx += gauss(rng) * 0.05 * fside * js;
                p.cy += gauss(rng) * 0.05 * fside * js;
                p.r = std::max(0.8, p.r + gauss(rng) * 0.04 * fside * js);
                p.theta += gauss(rng) * 0.12 * js;
                p.intensity = std::clamp(p.intensity + gauss(rng) * 0.06 * js, 0.15, 1.0);

                Sample s;
                s.id = next_id++;
                s.label = cls;
                s.task_id = t;
                s.features = render_glyph(p, side);
                const double noise = (outlier ? 0.10 : 0.02) * jitter;
                for (double& v : s.features) {
                    v = std::clamp(v + gauss(rng) * noise, 0.0, 1.0);
                }
                generated.push_back(std::move(s));
            }
            split_class(std::move(generated), task);
        }
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

namespace {

// index into [0, side) mirrored about the edges without repeating them
std::size_t reflect101(long i, std::size_t side) {
    const long n = static_cast<long>(side);
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return static_cast<std::size_t>(i);
}

void check_image(const std::vector<double>& img, std::size_t side, const char* op) {
    if (side == 0 || img.size() != side * side) {
        throw std::invalid_argument(std::string(op) + ": feature length " +
                                    std::to_string(img.size()) + " is not " +
                                    std::to_string(side) + "^2");
    }
}

}  // namespace

std::vector<double> shift_crop(const std::vector<double>& img, std::size_t side, int dx,
                               int dy) {
    check_image(img, side, "shift_crop");
    if (dx < -1 || dx > 1 || dy < -1 || dy > 1) {
        throw std::invalid_argument("shift_crop: offsets limited to -1..1");
    }
    std::vector<double> out(img.size());
    for (std::size_t y = 0; y < side; ++y) {
        const std::size_t sy = reflect101(static_cast<long>(y) + dy, side);
        for (std::size_t x = 0; x < side; ++x) {
            const std::size_t sx = reflect101(static_cast<long>(x) + dx, side);
            out[y * side + x] = img[sy * side + sx];
        }
    }
    return out;
}

std::vector<double> hflip_image(const std::vector<double>& img, std::size_t side) {
    check_image(img, side, "hflip_image");
    std::vector<double> out(img.size());
    for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
            out[y * side + x] = img[y * side + (side - 1 - x)];
        }
    }
    return out;
}

std::vector<Sample> augment(const std::vector<Sample>& batch, std::mt19937& rng,
                            const TaskStream& stream) {
    std::vector<Sample> out;
    out.reserve(batch.size());
    if (stream.kind == InputKind::Image) {
        std::uniform_int_distribution<int> offset(-1, 1);
        std::uniform_int_distribution<int> coin(0, 1);
        for (const Sample& s : batch) {
            const int dx = offset(rng);
            const int dy = offset(rng);
            const bool flip = coin(rng) == 1;
            Sample a = s;
            a.features = shift_crop(a.features, stream.side, dx, dy);
            if (flip) a.features = hflip_image(a.features, stream.side);
            out.push_back(std::move(a));
        }
    } else {
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (const Sample& s : batch) {
            Sample a = s;
            for (double& v : a.features) v += 0.05 * gauss(rng);
            out.push_back(std::move(a));
        }
    }
    return out;
}

std::string corruption_name(CorruptionKind kind) {
    switch (kind) {
        case CorruptionKind::Gaussian: return "gaussian";
        case CorruptionKind::Shot: return "shot";
        case CorruptionKind::Impulse: return "impulse";
        case CorruptionKind::Defocus: return "defocus";
        case CorruptionKind::Pixelate: return "pixelate";
    }
    throw std::logic_error("corruption_name: unknown kind");
}

CorruptionKind corruption_from_name(const std::string& name) {
    if (name == "gaussian") return CorruptionKind::Gaussian;
    if (name == "shot") return CorruptionKind::Shot;
    if (name == "impulse") return CorruptionKind::Impulse;
    if (name == "defocus") return CorruptionKind::Defocus;
    if (name == "pixelate") return CorruptionKind::Pixelate;
    throw std::invalid_argument("unknown corruption '" + name +
                                "' (expected gaussian, shot, impulse, defocus, or "
                                "pixelate)");
}

std::vector<double> gaussian_noise(const std::vector<double>& img, double sigma,
                                   std::mt19937& rng) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian_noise: negative sigma");
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        out[i] = std::clamp(img[i] + sigma * gauss(rng), 0.0, 1.0);
    }
    return out;
}

std::vector<double> shot_noise(const std::vector<double>& img, double photons,
                               std::mt19937& rng) {
    if (photons <= 0.0) throw std::invalid_argument("shot_noise: photons must be positive");
    std::vector<double> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        std::poisson_distribution<long> photon_count(img[i] * photons);
        out[i] = std::clamp(static_cast<double>(photon_count(rng)) / photons, 0.0, 1.0);
    }
    return out;
}

std::vector<double> impulse_noise(const std::vector<double>& img, double fraction,
                                  std::mt19937& rng) {
    if (fraction < 0.0 || fraction > 1.0) {
        throw std::invalid_argument("impulse_noise: fraction outside [0,1]");
    }
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<int> coin(0, 1);
    std::vector<double> out = img;
    for (double& v : out) {
        if (u01(rng) < fraction) v = coin(rng) == 1 ? 1.0 : 0.0;
    }
    return out;
}

std::vector<double> defocus_blur(const std::vector<double>& img, std::size_t side,
                                 int radius) {
    check_image(img, side, "defocus_blur");
    if (radius < 0) throw std::invalid_argument("defocus_blur: negative radius");
    if (radius == 0) return img;

    std::vector<std::pair<int, int>> offsets;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dx * dx + dy * dy <= radius * radius) offsets.emplace_back(dx, dy);
        }
    }
    const double w = 1.0 / static_cast<double>(offsets.size());
    std::vector<double> out(img.size(), 0.0);
    for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
            double acc = 0.0;
            for (const auto& [dx, dy] : offsets) {
                const std::size_t sx = reflect101(static_cast<long>(x) + dx, side);
                const std::size_t sy = reflect101(static_cast<long>(y) + dy, side);
                acc += img[sy * side + sx];
            }
            out[y * side + x] = std::clamp(acc * w, 0.0, 1.0);
        }
    }
    return out;
}

std::vector<double> pixelate(const std::vector<double>& img, std::size_t side,
                             int factor) {
    check_image(img, side, "pixelate");
    if (factor < 1) throw std::invalid_argument("pixelate: factor below 1");
    if (factor == 1) return img;

    const std::size_t f = static_cast<std::size_t>(factor);
    std::vector<double> out(img.size());
    for (std::size_t by = 0; by < side; by += f) {
        const std::size_t ey = std::min(side, by + f);
        for (std::size_t bx = 0; bx < side; bx += f) {
            const std::size_t ex = std::min(side, bx + f);
            double acc = 0.0;
            for (std::size_t y = by; y < ey; ++y) {
                for (std::size_t x = bx; x < ex; ++x) acc += img[y * side + x];
            }
            const double avg = acc / static_cast<double>((ey - by) * (ex - bx));
            for (std::size_t y = by; y < ey; ++y) {
                for (std::size_t x = bx; x < ex; ++x) out[y * side + x] = avg;
            }
        }
    }
    return out;
}

std::vector<Sample> corrupt(const std::vector<Sample>& test_set,
                            const CorruptionSpec& spec, std::size_t side,
                            std::mt19937& rng, const SeverityTable& table) {
    if (side == 0) {
        throw std::invalid_argument("corrupt: stream has no image geometry");
    }
    if (spec.severity < 0 || spec.severity > 5) {
        throw std::invalid_argument("corrupt: severity " + std::to_string(spec.severity) +
                                    " outside 0..5");
    }
    if (spec.severity == 0) return test_set;

    const std::size_t level = static_cast<std::size_t>(spec.severity - 1);
    std::vector<Sample> out;
    out.reserve(test_set.size());
    for (const Sample& s : test_set) {
        Sample c = s;
        switch (spec.kind) {
            case CorruptionKind::Gaussian:
                c.features = gaussian_noise(s.features, table.gaussian_sigma[level], rng);
                break;
            case CorruptionKind::Shot:
                c.features = shot_noise(s.features, table.shot_photons[level], rng);
                break;
            case CorruptionKind::Impulse:
                c.features = impulse_noise(s.features, table.impulse_fraction[level], rng);
                break;
            case CorruptionKind::Defocus:
                c.features = defocus_blur(s.features, side, table.defocus_radius[level]);
                break;
            case CorruptionKind::Pixelate:
                c.features = pixelate(s.features, side, table.pixelate_factor[level]);
                break;
        }
        out.push_back(std::move(c));
    }
    return out;
}

namespace {

constexpr char kCacheMagic[4] = {'A', 'C', 'd', 's'};
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("sample cache " + path + " is truncated");
    return value;
}

}  // namespace

void write_samples(const std::string& path, const std::vector<Sample>& samples,
                   std::size_t dim, std::size_t side) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_samples: cannot open " + path);
    out.write(kCacheMagic, 4);
    write_raw(out, kCacheVersion);
    write_raw(out, static_cast<std::uint64_t>(dim));
    write_raw(out, static_cast<std::uint64_t>(side));
    write_raw(out, static_cast<std::uint64_t>(samples.size()));
    for (const Sample& s : samples) {
        if (s.features.size() != dim) {
            throw std::invalid_argument("write_samples: sample " + std::to_string(s.id) +
                                        " has " + std::to_string(s.features.size()) +
                                        " features, expected " + std::to_string(dim));
        }
        out.write(reinterpret_cast<const char*>(s.features.data()),
                  static_cast<std::streamsize>(dim * sizeof(double)));
    }
    for (const Sample& s : samples) write_raw(out, static_cast<std::uint64_t>(s.id));
    for (const Sample& s : samples) write_raw(out, static_cast<std::uint64_t>(s.label));
    for (const Sample& s : samples) write_raw(out, static_cast<std::uint64_t>(s.task_id));
    if (!out) throw std::runtime_error("write_samples: short write to " + path);
}

std::vector<Sample> read_samples(const std::string& path, std::size_t* dim_out,
                                 std::size_t* side_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_samples: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCacheMagic, 4) != 0) {
        throw std::runtime_error("read_samples: " + path + " is not a sample cache");
    }
    const auto version = read_raw<std::uint32_t>(in, path);
    if (version != kCacheVersion) {
        throw std::runtime_error("read_samples: " + path + " has unsupported version " +
                                 std::to_string(version));
    }
    const auto dim = read_raw<std::uint64_t>(in, path);
    const auto side = read_raw<std::uint64_t>(in, path);
    const auto count = read_raw<std::uint64_t>(in, path);

    std::vector<Sample> samples(count);
    for (Sample& s : samples) {
        s.features.resize(dim);
        in.read(reinterpret_cast<char*>(s.features.data()),
                static_cast<std::streamsize>(dim * sizeof(double)));
        if (!in) throw std::runtime_error("sample cache " + path + " is truncated");
    }
    for (Sample& s : samples) s.id = read_raw<std::uint64_t>(in, path);
    for (Sample& s : samples) s.label = read_raw<std::uint64_t>(in, path);
    for (Sample& s : samples) s.task_id = read_raw<std::uint64_t>(in, path);
    if (dim_out) *dim_out = dim;
    if (side_out) *side_out = side;
    return samples;
}

void cache_stream(const TaskStream& stream, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["kind"] = stream.kind == InputKind::Image ? "image" : "vector";
    manifest["dim"] = stream.dim;
    manifest["side"] = stream.side;
    manifest["tasks"] = nlohmann::json::array();
    for (const Task& task : stream.tasks) {
        const std::string train_file = "task" + std::to_string(task.id) + "_train.bin";
        const std::string test_file = "task" + std::to_string(task.id) + "_test.bin";
        write_samples(dir + "/" + train_file, task.train, stream.dim, stream.side);
        write_samples(dir + "/" + test_file, task.test, stream.dim, stream.side);
        manifest["tasks"].push_back({{"id", task.id},
                                     {"classes", task.classes},
                                     {"train", train_file},
                                     {"test", test_file}});
    }
    std::ofstream out(dir + "/stream.json");
    if (!out) throw std::runtime_error("cache_stream: cannot open " + dir + "/stream.json");
    out << manifest.dump(2) << "\n";
}

TaskStream load_stream_cache(const std::string& dir) {
    std::ifstream in(dir + "/stream.json");
    if (!in) {
        throw std::runtime_error("load_stream_cache: cannot open " + dir + "/stream.json");
    }
    nlohmann::json manifest;
    in >> manifest;

    TaskStream stream;
    stream.kind =
            manifest.at("kind").get<std::string>() == "image" ? InputKind::Image
                                                              : InputKind::Vector;
    stream.dim = manifest.at("dim").get<std::size_t>();
    stream.side = manifest.at("side").get<std::size_t>();
    for (const auto& jt : manifest.at("tasks")) {
        Task task;
        task.id = jt.at("id").get<std::size_t>();
        task.classes = jt.at("classes").get<std::vector<std::size_t>>();
        std::size_t dim = 0, side = 0;
        task.train = read_samples(dir + "/" + jt.at("train").get<std::string>(), &dim,
                                  &side);
        task.test = read_samples(dir + "/" + jt.at("test").get<std::string>(), &dim,
                                 &side);
        if (dim != stream.dim || side != stream.side) {
            throw std::runtime_error("load_stream_cache: task file geometry disagrees "
                                     "with the manifest in " +
                                     dir);
        }
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

}  // namespace acr
