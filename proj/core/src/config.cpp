#include "fusion_stereo/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "fusion_stereo/errors.hpp"

namespace fstereo {

namespace {

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_double(const std::string& v, const std::string& where) {
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(where + ": '" + v + "' is not a number");
    }
}

int64_t parse_i64(const std::string& v, const std::string& where) {
    try {
        size_t pos = 0;
        const long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(where + ": '" + v + "' is not an integer");
    }
}

uint64_t parse_u64(const std::string& v, const std::string& where) {
    try {
        size_t pos = 0;
        const unsigned long long d = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(where + ": '" + v + "' is not an unsigned integer");
    }
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename T, typename Fmt>
std::string join_list(const std::vector<T>& xs, Fmt fmt) {
    std::string out;
    for (const T& x : xs) {
        if (!out.empty()) out += ",";
        out += fmt(x);
    }
    return out;
}

}  // namespace

IniFile IniFile::parse_string(const std::string& text, const std::string& origin) {
    IniFile ini;
    ini.origin_ = origin;
    std::istringstream is(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + " line " + std::to_string(line_no) +
                                  ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError(origin + " line " + std::to_string(line_no) +
                                  ": empty section name");
            ini.sections_[section];
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + " line " + std::to_string(line_no) +
                              ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + " line " + std::to_string(line_no) + ": empty key");
        if (section.empty())
            throw ConfigError(origin + " line " + std::to_string(line_no) +
                              ": key outside any [section]");
        ini.sections_[section][key] = value;
    }
    return ini;
}

IniFile IniFile::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_string(buf.str(), path);
}

bool IniFile::has(const std::string& sec, const std::string& key) const {
    const auto s = sections_.find(sec);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string IniFile::get_str(const std::string& sec, const std::string& key,
                             const std::string& def) const {
    const auto s = sections_.find(sec);
    if (s == sections_.end()) return def;
    const auto k = s->second.find(key);
    return k == s->second.end() ? def : k->second;
}

double IniFile::get_double(const std::string& sec, const std::string& key, double def) const {
    if (!has(sec, key)) return def;
    return parse_double(get_str(sec, key, ""), "[" + sec + "] " + key);
}

int IniFile::get_int(const std::string& sec, const std::string& key, int def) const {
    if (!has(sec, key)) return def;
    return static_cast<int>(parse_i64(get_str(sec, key, ""), "[" + sec + "] " + key));
}

uint64_t IniFile::get_u64(const std::string& sec, const std::string& key, uint64_t def) const {
    if (!has(sec, key)) return def;
    return parse_u64(get_str(sec, key, ""), "[" + sec + "] " + key);
}

bool IniFile::get_bool(const std::string& sec, const std::string& key, bool def) const {
    if (!has(sec, key)) return def;
    const std::string v = get_str(sec, key, "");
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("[" + sec + "] " + key + ": '" + v + "' is not a boolean");
}

std::vector<double> IniFile::get_double_list(const std::string& sec, const std::string& key,
                                             const std::vector<double>& def) const {
    if (!has(sec, key)) return def;
    std::vector<double> out;
    for (const std::string& item : split_list(get_str(sec, key, "")))
        out.push_back(parse_double(item, "[" + sec + "] " + key));
    if (out.empty()) throw ConfigError("[" + sec + "] " + key + ": empty list");
    return out;
}

std::vector<int> IniFile::get_int_list(const std::string& sec, const std::string& key,
                                       const std::vector<int>& def) const {
    if (!has(sec, key)) return def;
    std::vector<int> out;
    for (const std::string& item : split_list(get_str(sec, key, "")))
        out.push_back(static_cast<int>(parse_i64(item, "[" + sec + "] " + key)));
    if (out.empty()) throw ConfigError("[" + sec + "] " + key + ": empty list");
    return out;
}

std::vector<uint64_t> IniFile::get_u64_list(const std::string& sec, const std::string& key,
                                            const std::vector<uint64_t>& def) const {
    if (!has(sec, key)) return def;
    std::vector<uint64_t> out;
    for (const std::string& item : split_list(get_str(sec, key, "")))
        out.push_back(parse_u64(item, "[" + sec + "] " + key));
    if (out.empty()) throw ConfigError("[" + sec + "] " + key + ": empty list");
    return out;
}

RunConfig RunConfig::from_ini(const IniFile& ini) {
    static const std::map<std::string, std::set<std::string>> known = {
        {"run", {"variant", "seed", "iters", "out", "data", "precision"}},
        {"network",
         {"channels", "reg_channels", "d_max", "downsample", "n_bins", "cond_layers", "embed",
          "cbn_hidden", "concat_channels", "bn_momentum", "bn_eps"}},
        {"train", {"lr", "alpha", "eps", "crop_h", "crop_w", "stop_below"}},
        {"scene",
         {"width", "height", "n_planes", "d_lo", "d_hi", "slanted", "texture", "lidar_coverage",
          "lidar_noise", "focal_px", "baseline_m", "count"}},
        {"density", {"fractions", "seeds", "eval_samples"}},
        {"sensitivity", {"y0", "x0", "h", "w", "delta", "sample"}},
        {"eval", {"samples"}},
    };
    for (const auto& [sec, keys] : ini.sections()) {
        const auto ks = known.find(sec);
        if (ks == known.end()) throw ConfigError("unknown config section [" + sec + "]");
        for (const auto& [key, _] : keys) {
            if (!ks->second.count(key))
                throw ConfigError("unknown config key '" + key + "' in section [" + sec + "]");
        }
    }

    RunConfig c;
    c.variant = ini.get_str("run", "variant", c.variant);
    c.seed = ini.get_u64("run", "seed", c.seed);
    c.iters = ini.get_int("run", "iters", c.iters);
    c.out = ini.get_str("run", "out", c.out);
    c.data = ini.get_str("run", "data", c.data);
    c.precision = ini.get_str("run", "precision", c.precision);

    c.network.channels = ini.get_int("network", "channels", c.network.channels);
    c.network.reg_channels = ini.get_int("network", "reg_channels", c.network.reg_channels);
    c.network.d_max = ini.get_int("network", "d_max", c.network.d_max);
    c.network.downsample = ini.get_int("network", "downsample", c.network.downsample);
    c.network.n_bins = ini.get_int("network", "n_bins", c.network.n_bins);
    c.network.cond_layers = ini.get_int_list("network", "cond_layers", c.network.cond_layers);
    c.network.embed = ini.get_int("network", "embed", c.network.embed);
    c.network.cbn_hidden = ini.get_int("network", "cbn_hidden", c.network.cbn_hidden);
    c.network.concat_channels =
        ini.get_int("network", "concat_channels", c.network.concat_channels);
    c.network.bn_momentum = ini.get_double("network", "bn_momentum", c.network.bn_momentum);
    c.network.bn_eps = ini.get_double("network", "bn_eps", c.network.bn_eps);

    c.train.lr = ini.get_double("train", "lr", c.train.lr);
    c.train.alpha = ini.get_double("train", "alpha", c.train.alpha);
    c.train.eps = ini.get_double("train", "eps", c.train.eps);
    c.train.crop_h = ini.get_int("train", "crop_h", c.train.crop_h);
    c.train.crop_w = ini.get_int("train", "crop_w", c.train.crop_w);
    c.train.stop_below = ini.get_double("train", "stop_below", c.train.stop_below);

    c.scene.width = ini.get_int("scene", "width", c.scene.width);
    c.scene.height = ini.get_int("scene", "height", c.scene.height);
    c.scene.n_planes = ini.get_int("scene", "n_planes", c.scene.n_planes);
    c.scene.d_lo = ini.get_double("scene", "d_lo", c.scene.d_lo);
    c.scene.d_hi = ini.get_double("scene", "d_hi", c.scene.d_hi);
    c.scene.slanted = ini.get_bool("scene", "slanted", c.scene.slanted);
    c.scene.texture = ini.get_str("scene", "texture", c.scene.texture);
    c.scene.lidar_coverage = ini.get_double("scene", "lidar_coverage", c.scene.lidar_coverage);
    c.scene.lidar_noise = ini.get_double("scene", "lidar_noise", c.scene.lidar_noise);
    c.scene.focal_px = ini.get_double("scene", "focal_px", c.scene.focal_px);
    c.scene.baseline_m = ini.get_double("scene", "baseline_m", c.scene.baseline_m);
    c.scene_count = ini.get_int("scene", "count", c.scene_count);

    c.density_fractions = ini.get_double_list("density", "fractions", c.density_fractions);
    c.density_seeds = ini.get_u64_list("density", "seeds", c.density_seeds);
    c.density_eval_samples = ini.get_int("density", "eval_samples", c.density_eval_samples);

    c.sens_y0 = ini.get_int("sensitivity", "y0", c.sens_y0);
    c.sens_x0 = ini.get_int("sensitivity", "x0", c.sens_x0);
    c.sens_h = ini.get_int("sensitivity", "h", c.sens_h);
    c.sens_w = ini.get_int("sensitivity", "w", c.sens_w);
    c.sens_delta = ini.get_double("sensitivity", "delta", c.sens_delta);
    c.sens_sample = ini.get_int("sensitivity", "sample", c.sens_sample);

    c.eval_samples = ini.get_int("eval", "samples", c.eval_samples);

    c.scene.d_max = c.network.d_max;
    c.train.iters = c.iters;
    c.train.seed = c.seed;
    return c;
}

void RunConfig::write_resolved(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write resolved config '" + path + "'");
    os << "[run]\n";
    os << "variant = " << variant << '\n';
    os << "seed = " << seed << '\n';
    os << "iters = " << iters << '\n';
    os << "out = " << out << '\n';
    os << "data = " << data << '\n';
    os << "precision = " << precision << '\n';
    os << "\n[network]\n";
    os << "channels = " << network.channels << '\n';
    os << "reg_channels = " << network.reg_channels << '\n';
    os << "d_max = " << network.d_max << '\n';
    os << "downsample = " << network.downsample << '\n';
    os << "n_bins = " << network.n_bins << '\n';
    os << "cond_layers = "
       << join_list(network.cond_layers, [](int v) { return std::to_string(v); }) << '\n';
    os << "embed = " << network.embed << '\n';
    os << "cbn_hidden = " << network.cbn_hidden << '\n';
    os << "concat_channels = " << network.concat_channels << '\n';
    os << "bn_momentum = " << fmt_double(network.bn_momentum) << '\n';
    os << "bn_eps = " << fmt_double(network.bn_eps) << '\n';
    os << "\n[train]\n";
    os << "lr = " << fmt_double(train.lr) << '\n';
    os << "alpha = " << fmt_double(train.alpha) << '\n';
    os << "eps = " << fmt_double(train.eps) << '\n';
    os << "crop_h = " << train.crop_h << '\n';
    os << "crop_w = " << train.crop_w << '\n';
    os << "stop_below = " << fmt_double(train.stop_below) << '\n';
    os << "\n[scene]\n";
    os << "width = " << scene.width << '\n';
    os << "height = " << scene.height << '\n';
    os << "n_planes = " << scene.n_planes << '\n';
    os << "d_lo = " << fmt_double(scene.d_lo) << '\n';
    os << "d_hi = " << fmt_double(scene.d_hi) << '\n';
    os << "slanted = " << (scene.slanted ? 1 : 0) << '\n';
    os << "texture = " << scene.texture << '\n';
    os << "lidar_coverage = " << fmt_double(scene.lidar_coverage) << '\n';
    os << "lidar_noise = " << fmt_double(scene.lidar_noise) << '\n';
    os << "focal_px = " << fmt_double(scene.focal_px) << '\n';
    os << "baseline_m = " << fmt_double(scene.baseline_m) << '\n';
    os << "count = " << scene_count << '\n';
    os << "\n[density]\n";
    os << "fractions = " << join_list(density_fractions, fmt_double) << '\n';
    os << "seeds = "
       << join_list(density_seeds,
                    [](uint64_t v) { return std::to_string(static_cast<unsigned long long>(v)); })
       << '\n';
    os << "eval_samples = " << density_eval_samples << '\n';
    os << "\n[sensitivity]\n";
    os << "y0 = " << sens_y0 << '\n';
    os << "x0 = " << sens_x0 << '\n';
    os << "h = " << sens_h << '\n';
    os << "w = " << sens_w << '\n';
    os << "delta = " << fmt_double(sens_delta) << '\n';
    os << "sample = " << sens_sample << '\n';
    os << "\n[eval]\n";
    os << "samples = " << eval_samples << '\n';
}

void apply_precision_choice(RunConfig& cfg) {
    const char* env = std::getenv("FUSION_STEREO_PRECISION");
    std::string choice = cfg.precision;
    if (env && *env) choice = env;
    if (choice != "f32" && choice != "f64")
        throw ConfigError("precision must be f32 or f64, got '" + choice + "'");
    cfg.precision = choice;
    set_precision_mode(choice == "f32" ? Precision::f32 : Precision::f64);
}

}  // namespace fstereo
