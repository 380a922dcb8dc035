#include "kmd/io.hpp"

#include <json.hpp>

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>

namespace kmd {

using nlohmann::json;

namespace {

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    return in;
}

}  // namespace

void write_signal_csv(const std::string& path, const SampledSignal& s) {
    auto out = open_out(path);
    out << "t,value\n";
    for (Index k = 0; k < s.mesh.n_points; ++k)
        out << fmt17(s.mesh.point(k)) << ',' << fmt17(s.values(k)) << '\n';
}

SampledSignal read_signal_csv(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty signal CSV: " + path);
    std::vector<double> ts, vs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError("malformed signal CSV row: " + line);
        ts.push_back(std::stod(line.substr(0, comma)));
        vs.push_back(std::stod(line.substr(comma + 1)));
    }
    if (ts.size() < 2) throw IoError("signal CSV needs at least two rows: " + path);
    TimeMesh mesh(ts.front(), ts.back(), static_cast<Index>(ts.size()));
    Vector v = Eigen::Map<Vector>(vs.data(), static_cast<Index>(vs.size()));
    return SampledSignal(mesh, std::move(v));
}

void write_waveform_json(const std::string& path, const Waveform& w) {
    json j;
    j["cos"] = std::vector<double>(w.cos_coeffs().data(), w.cos_coeffs().data() + w.k_max());
    j["sin"] = std::vector<double>(w.sin_coeffs().data(),
                                   w.sin_coeffs().data() + std::max<Index>(w.k_max() - 1, 0));
    switch (w.tag()) {
        case Waveform::Tag::triangle: j["tag"] = "triangle"; break;
        case Waveform::Tag::ekg: j["tag"] = "ekg"; break;
        default: j["tag"] = "fourier"; break;
    }
    open_out(path) << j.dump(2) << '\n';
}

Waveform read_waveform_json(const std::string& path) {
    json j = json::parse(open_in(path));
    const std::string tag = j.value("tag", "fourier");
    if (tag == "triangle") return make_triangle_waveform(std::max<Index>(1, static_cast<Index>(j["cos"].size())));
    if (tag == "ekg") return make_ekg_waveform(std::max<Index>(1, static_cast<Index>(j["cos"].size())));
    std::vector<double> c = j["cos"].get<std::vector<double>>();
    std::vector<double> s = j["sin"].get<std::vector<double>>();
    Vector cv = Eigen::Map<Vector>(c.data(), static_cast<Index>(c.size()));
    Vector sv = Eigen::Map<Vector>(s.data(), static_cast<Index>(s.size()));
    return Waveform(cv, sv, Waveform::Tag::fourier);
}

void write_map_csv(const std::string& path, const GridMap& map, const std::string& value_name) {
    auto out = open_out(path);
    out << "tau,omega," << value_name << '\n';
    for (Index i = 0; i < map.grid.n_tau(); ++i)
        for (Index j = 0; j < map.grid.n_omega(); ++j)
            out << fmt17(map.grid.tau_values(i)) << ',' << fmt17(map.grid.omega_values(j)) << ','
                << fmt17(map.values(i, j)) << '\n';
}

void write_decomposition_json(const std::string& path, const Decomposition& d) {
    json j;
    for (size_t i = 0; i < d.labels.size(); ++i) {
        const Vector& v = d.parts[i].values;
        j["modes"][d.labels[i]] = std::vector<double>(v.data(), v.data() + v.size());
        j["energies"][d.labels[i]] = d.energies(static_cast<Index>(i));
    }
    j["noise_energy"] = d.noise_energy;
    j["total_energy"] = d.total_energy;
    open_out(path) << j.dump() << '\n';
}

void write_ridges_json(const std::string& path, const std::vector<Ridge>& ridges,
                       const TFGrid& grid) {
    json arr = json::array();
    for (const Ridge& r : ridges) {
        json jr;
        jr["label"] = r.label;
        json cells = json::array();
        for (const auto& [i, j] : r.cells) cells.push_back({i, j});
        jr["cells"] = std::move(cells);
        json crest = json::array();
        for (const auto& [i, j] : r.crest)
            crest.push_back({{"tau", grid.tau_values(i)}, {"omega", grid.omega_values(j)}});
        jr["crest"] = std::move(crest);
        arr.push_back(std::move(jr));
    }
    open_out(path) << arr.dump() << '\n';
}

namespace {
constexpr std::uint64_t kKernelMagic = 0x4b4d444b524e4c31ull;  // "KMDKRNL1"
}

void write_kernel_binary(const std::string& path, const KernelMatrix& K) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    const std::uint64_t n = static_cast<std::uint64_t>(K.n());
    const std::uint64_t n_points = static_cast<std::uint64_t>(K.mesh.n_points);
    const std::uint64_t flags = 0, reserved = 0;
    double header_d[3] = {K.mesh.t_start, K.mesh.t_end, K.weight};
    out.write(reinterpret_cast<const char*>(&kKernelMagic), 8);
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(&header_d[0]), 8);
    out.write(reinterpret_cast<const char*>(&header_d[1]), 8);
    out.write(reinterpret_cast<const char*>(&n_points), 8);
    out.write(reinterpret_cast<const char*>(&header_d[2]), 8);
    out.write(reinterpret_cast<const char*>(&flags), 8);
    out.write(reinterpret_cast<const char*>(&reserved), 8);
    // row-major payload
    for (Index i = 0; i < K.n(); ++i)
        for (Index j = 0; j < K.n(); ++j) {
            const double x = K.entries(i, j);
            out.write(reinterpret_cast<const char*>(&x), 8);
        }
}

KernelMatrix read_kernel_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::uint64_t magic = 0, n = 0, n_points = 0, flags = 0, reserved = 0;
    double t_start = 0, t_end = 0, weight = 1;
    in.read(reinterpret_cast<char*>(&magic), 8);
    in.read(reinterpret_cast<char*>(&n), 8);
    in.read(reinterpret_cast<char*>(&t_start), 8);
    in.read(reinterpret_cast<char*>(&t_end), 8);
    in.read(reinterpret_cast<char*>(&n_points), 8);
    in.read(reinterpret_cast<char*>(&weight), 8);
    in.read(reinterpret_cast<char*>(&flags), 8);
    in.read(reinterpret_cast<char*>(&reserved), 8);
    if (!in || magic != kKernelMagic) throw IoError("bad kernel binary header: " + path);
    TimeMesh mesh(t_start, t_end, static_cast<Index>(n_points));
    Matrix K(static_cast<Index>(n), static_cast<Index>(n));
    for (std::uint64_t i = 0; i < n; ++i)
        for (std::uint64_t j = 0; j < n; ++j) {
            double x;
            in.read(reinterpret_cast<char*>(&x), 8);
            K(static_cast<Index>(i), static_cast<Index>(j)) = x;
        }
    if (!in) throw IoError("truncated kernel binary: " + path);
    return KernelMatrix(mesh, std::move(K), weight);
}

namespace {

struct Field {
    const char* section;
    const char* key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string b2s(bool b) { return b ? "true" : "false"; }
bool s2b(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("expected boolean, got: " + s);
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        {"mesh", "t_start", [](const RunConfig& c) { return fmt17(c.t_start); },
         [](RunConfig& c, const std::string& v) { c.t_start = std::stod(v); }},
        {"mesh", "t_end", [](const RunConfig& c) { return fmt17(c.t_end); },
         [](RunConfig& c, const std::string& v) { c.t_end = std::stod(v); }},
        {"mesh", "n_points", [](const RunConfig& c) { return std::to_string(c.n_points); },
         [](RunConfig& c, const std::string& v) { c.n_points = std::stol(v); }},
        {"grid", "n_tau", [](const RunConfig& c) { return std::to_string(c.n_tau); },
         [](RunConfig& c, const std::string& v) { c.n_tau = std::stol(v); }},
        {"grid", "n_omega", [](const RunConfig& c) { return std::to_string(c.n_omega); },
         [](RunConfig& c, const std::string& v) { c.n_omega = std::stol(v); }},
        {"grid", "omega_min", [](const RunConfig& c) { return fmt17(c.omega_min); },
         [](RunConfig& c, const std::string& v) { c.omega_min = std::stod(v); }},
        {"grid", "omega_max", [](const RunConfig& c) { return fmt17(c.omega_max); },
         [](RunConfig& c, const std::string& v) { c.omega_max = std::stod(v); }},
        {"grid", "log_omega", [](const RunConfig& c) { return b2s(c.log_omega); },
         [](RunConfig& c, const std::string& v) { c.log_omega = s2b(v); }},
        {"kernel", "alpha", [](const RunConfig& c) { return fmt17(c.alpha); },
         [](RunConfig& c, const std::string& v) { c.alpha = std::stod(v); }},
        {"kernel", "alpha_final", [](const RunConfig& c) { return fmt17(c.alpha_final); },
         [](RunConfig& c, const std::string& v) { c.alpha_final = std::stod(v); }},
        {"kernel", "gamma", [](const RunConfig& c) { return fmt17(c.gamma); },
         [](RunConfig& c, const std::string& v) { c.gamma = std::stod(v); }},
        {"kernel", "sigma", [](const RunConfig& c) { return fmt17(c.sigma); },
         [](RunConfig& c, const std::string& v) { c.sigma = std::stod(v); }},
        {"thresholds", "eps0", [](const RunConfig& c) { return fmt17(c.eps0); },
         [](RunConfig& c, const std::string& v) { c.eps0 = std::stod(v); }},
        {"thresholds", "eps1", [](const RunConfig& c) { return fmt17(c.eps1); },
         [](RunConfig& c, const std::string& v) { c.eps1 = std::stod(v); }},
        {"thresholds", "eps2", [](const RunConfig& c) { return fmt17(c.eps2); },
         [](RunConfig& c, const std::string& v) { c.eps2 = std::stod(v); }},
        {"thresholds", "eps3", [](const RunConfig& c) { return fmt17(c.eps3); },
         [](RunConfig& c, const std::string& v) { c.eps3 = std::stod(v); }},
        {"thresholds", "threshold_frac", [](const RunConfig& c) { return fmt17(c.threshold_frac); },
         [](RunConfig& c, const std::string& v) { c.threshold_frac = std::stod(v); }},
        {"thresholds", "coeff_interval", [](const RunConfig& c) { return fmt17(c.coeff_interval); },
         [](RunConfig& c, const std::string& v) { c.coeff_interval = std::stod(v); }},
        {"thresholds", "coeff_cutoff", [](const RunConfig& c) { return fmt17(c.coeff_cutoff); },
         [](RunConfig& c, const std::string& v) { c.coeff_cutoff = std::stod(v); }},
        {"thresholds", "d", [](const RunConfig& c) { return std::to_string(c.d); },
         [](RunConfig& c, const std::string& v) { c.d = std::stol(v); }},
        {"thresholds", "rate", [](const RunConfig& c) { return fmt17(c.rate); },
         [](RunConfig& c, const std::string& v) { c.rate = std::stod(v); }},
        {"thresholds", "k_max", [](const RunConfig& c) { return std::to_string(c.k_max); },
         [](RunConfig& c, const std::string& v) { c.k_max = std::stol(v); }},
        {"iteration", "iter_eps1", [](const RunConfig& c) { return fmt17(c.iter_eps1); },
         [](RunConfig& c, const std::string& v) { c.iter_eps1 = std::stod(v); }},
        {"iteration", "iter_eps2", [](const RunConfig& c) { return fmt17(c.iter_eps2); },
         [](RunConfig& c, const std::string& v) { c.iter_eps2 = std::stod(v); }},
        {"iteration", "max_sweeps", [](const RunConfig& c) { return std::to_string(c.max_sweeps); },
         [](RunConfig& c, const std::string& v) { c.max_sweeps = std::stol(v); }},
        {"iteration", "max_modes", [](const RunConfig& c) { return std::to_string(c.max_modes); },
         [](RunConfig& c, const std::string& v) { c.max_modes = std::stol(v); }},
        {"iteration", "coeff_stride", [](const RunConfig& c) { return std::to_string(c.coeff_stride); },
         [](RunConfig& c, const std::string& v) { c.coeff_stride = std::stol(v); }},
        {"iteration", "sg_window", [](const RunConfig& c) { return std::to_string(c.sg_window); },
         [](RunConfig& c, const std::string& v) { c.sg_window = std::stol(v); }},
        {"iteration", "sg_order", [](const RunConfig& c) { return std::to_string(c.sg_order); },
         [](RunConfig& c, const std::string& v) { c.sg_order = std::stol(v); }},
        {"segmentation", "extension_band", [](const RunConfig& c) { return fmt17(c.extension_band); },
         [](RunConfig& c, const std::string& v) { c.extension_band = std::stod(v); }},
        {"segmentation", "max_freq_tv", [](const RunConfig& c) { return fmt17(c.max_freq_tv); },
         [](RunConfig& c, const std::string& v) { c.max_freq_tv = std::stod(v); }},
        {"segmentation", "group_gap_log", [](const RunConfig& c) { return fmt17(c.group_gap_log); },
         [](RunConfig& c, const std::string& v) { c.group_gap_log = std::stod(v); }},
        {"segmentation", "group_amp_jump", [](const RunConfig& c) { return fmt17(c.group_amp_jump); },
         [](RunConfig& c, const std::string& v) { c.group_amp_jump = std::stod(v); }},
        {"segmentation", "coverage", [](const RunConfig& c) { return fmt17(c.coverage); },
         [](RunConfig& c, const std::string& v) { c.coverage = std::stod(v); }},
        {"segmentation", "scan_stride", [](const RunConfig& c) { return std::to_string(c.scan_stride); },
         [](RunConfig& c, const std::string& v) { c.scan_stride = std::stol(v); }},
        {"run", "pipeline", [](const RunConfig& c) { return c.pipeline; },
         [](RunConfig& c, const std::string& v) { c.pipeline = v; }},
        {"run", "preset", [](const RunConfig& c) { return c.preset; },
         [](RunConfig& c, const std::string& v) { c.preset = v; }},
        {"run", "waveform", [](const RunConfig& c) { return c.waveform; },
         [](RunConfig& c, const std::string& v) { c.waveform = v; }},
        {"run", "seed", [](const RunConfig& c) { return std::to_string(c.seed); },
         [](RunConfig& c, const std::string& v) { c.seed = std::stoull(v); }},
        {"run", "output_dir", [](const RunConfig& c) { return c.output_dir; },
         [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
        {"run", "l2_energy", [](const RunConfig& c) { return b2s(c.l2_energy); },
         [](RunConfig& c, const std::string& v) { c.l2_energy = s2b(v); }},
        {"run", "threads", [](const RunConfig& c) { return std::to_string(c.threads); },
         [](RunConfig& c, const std::string& v) { c.threads = std::stol(v); }},
    };
    return f;
}

void validate(const RunConfig& c) {
    auto in_range = [](double x, double lo, double hi, const char* name) {
        if (!(x >= lo && x <= hi))
            throw ConfigError(std::string("config value out of range: ") + name);
    };
    if (c.n_points < 2) throw ConfigError("n_points must be >= 2");
    if (!(c.t_end > c.t_start)) throw ConfigError("t_end must exceed t_start");
    if (c.n_tau < 2 || c.n_omega < 2) throw ConfigError("grid needs >= 2 nodes per axis");
    if (!(c.omega_min > 0 && c.omega_max > c.omega_min))
        throw ConfigError("need omega_max > omega_min > 0");
    if (!(c.alpha > 0)) throw ConfigError("alpha must be > 0");
    if (c.alpha_final < 0) throw ConfigError("alpha_final must be >= 0");
    if (!(c.gamma > 0)) throw ConfigError("gamma must be > 0");
    if (c.sigma < 0) throw ConfigError("sigma must be >= 0");
    in_range(c.eps0, 0.0, 1.0, "eps0");
    in_range(c.threshold_frac, 1e-9, 0.999999, "threshold_frac");
    in_range(c.rate, 1e-9, 1.0, "rate");
    in_range(c.coeff_cutoff, 0.0, 1.0, "coeff_cutoff");
    in_range(c.coverage, 0.0, 1.0, "coverage");
    if (!(c.eps1 > 0 && c.eps2 > 0 && c.eps3 > 0)) throw ConfigError("eps1..eps3 must be > 0");
    if (c.d < 0 || c.d > 6) throw ConfigError("d must be in 0..6");
    if (c.k_max < 2) throw ConfigError("k_max must be >= 2");
    if (c.max_sweeps < 1 || c.max_modes < 1) throw ConfigError("iteration limits must be >= 1");
    if (c.coeff_stride < 1 || c.scan_stride < 1) throw ConfigError("strides must be >= 1");
    if (c.sg_window != 0 && (c.sg_window % 2 == 0 || c.sg_order >= c.sg_window))
        throw ConfigError("sg_window must be odd and exceed sg_order");
}

}  // namespace

std::string RunConfig::serialize() const {
    std::ostringstream out;
    std::string section;
    for (const Field& f : fields()) {
        if (section != f.section) {
            if (!section.empty()) out << '\n';
            section = f.section;
            out << '[' << section << "]\n";
        }
        out << f.key << " = " << f.get(*this) << '\n';
    }
    return out.str();
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("malformed section header: " + line);
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value: " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        bool found = false;
        for (const Field& f : fields()) {
            if (section == f.section && key == f.key) {
                try {
                    f.set(cfg, val);
                } catch (const ConfigError&) {
                    throw;
                } catch (const std::exception&) {
                    throw ConfigError("cannot parse value for " + section + "." + key + ": " + val);
                }
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("unknown config key: [" + section + "] " + key);
    }
    validate(cfg);
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    auto in = open_in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void RunConfig::save(const std::string& path) const { open_out(path) << serialize(); }

std::uint64_t RunConfig::hash() const {
    const std::string s = serialize();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

void write_metadata_json(const std::string& path, const RunConfig& cfg, Index threads_used) {
    json j;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, cfg.hash());
    j["config_hash"] = buf;
    j["seed"] = cfg.seed;
    j["threads"] = threads_used;
    open_out(path) << j.dump(2) << '\n';
}

}  // namespace kmd
