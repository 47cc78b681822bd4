#include "vtsmp/problem_io.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace vtsmp {

namespace {

ControlDomain two_points() { return ControlDomain::finite({Vector::Constant(1, 1.0), Vector::Constant(1, 2.0)}); }

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& s, const std::string& key) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw ValidationError("bad number '" + s + "' for " + key);
    return v;
}

int parse_int(const std::string& s, const std::string& key) {
    int v = 0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw ValidationError("bad integer '" + s + "' for " + key);
    return v;
}

std::vector<double> parse_vector(const std::string& s, const std::string& key) {
    std::vector<double> out;
    for (const auto& part : split(s, ',')) out.push_back(parse_double(part, key));
    return out;
}

}  // namespace

std::vector<std::string> registry_names() {
    return {"example1", "example2", "lq-linear", "nonlinear-test", "oscillator-2d"};
}

ProblemDefinition registry_problem(std::string_view name) {
    ProblemDefinition p;
    p.name = std::string(name);
    if (name == "example1") {
        p.x0 = {0.0};
        p.U = two_points();
        p.b = {"x + u"};
        p.sigma = {"0"};
        p.f = "u";
        p.g = "0";
        p.phi = "x";
        p.candidate = std::vector<double>{1.0};
    } else if (name == "example2") {
        p.x0 = {0.5};
        p.U = two_points();
        p.b = {"1"};
        p.sigma = {"u"};
        p.f = "u";
        p.g = "0";
        p.phi = "x";
        p.candidate = std::vector<double>{1.0};
    } else if (name == "lq-linear") {
        p.x0 = {0.0};
        p.U = two_points();
        p.b = {"0.5*x + u"};
        p.sigma = {"0.3"};
        p.f = "0.5*x^2";
        p.g = "0.5*x^2";
        p.phi = "x";
        p.candidate = std::vector<double>{1.0};
    } else if (name == "nonlinear-test") {
        p.x0 = {0.0};
        p.U = two_points();
        p.b = {"x + u"};
        p.sigma = {"0.3*u"};
        p.f = "u";
        p.g = "0";
        p.phi = "x^2";
        p.candidate = std::vector<double>{1.0};
    } else if (name == "oscillator-2d") {
        // Damped oscillator with a state-dependent second noise channel.
        p.m = 2;
        p.d = 2;
        p.k = 1;
        p.x0 = {0.0, 0.0};
        p.U = two_points();
        p.b = {"x2", "-x1 - 0.2*x2 + u"};
        p.sigma = {"0.1", "0", "0", "0.1*u + 0.05*x1"};
        p.f = "0.5*x1^2 + 0.1*u";
        p.g = "0.5*x1^2 + 0.5*x2^2";
        p.phi = "x1 + 0.1*x2^2";
        p.alpha = 0.5;
        p.T = 2.0;
        p.candidate = std::vector<double>{1.0};
    } else {
        throw ValidationError("unknown problem '" + std::string(name) + "'");
    }
    return p;
}

ProblemDefinition parse_problem_text(std::string_view text) {
    static const std::map<std::string, std::set<std::string>> allowed = {
        {"problem", {"m", "d", "k", "T", "alpha", "x0", "seed", "name"}},
        {"coefficients", {"b", "sigma", "f", "g", "phi"}},
        {"control", {"kind", "points", "lower", "upper", "candidate"}},
    };
    std::map<std::string, std::map<std::string, std::string>> values;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const std::string where = " (line " + std::to_string(line_no) + ")";
        if (line.front() == '[') {
            if (line.back() != ']') throw ValidationError("malformed section header" + where);
            section = trim(line.substr(1, line.size() - 2));
            if (!allowed.contains(section)) throw ValidationError("unknown section [" + section + "]" + where);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError("expected key = value" + where);
        if (section.empty()) throw ValidationError("key outside of a section" + where);
        const std::string key = trim(line.substr(0, eq));
        if (!allowed.at(section).contains(key)) {
            throw ValidationError("unknown key '" + key + "' in [" + section + "]" + where);
        }
        if (values[section].contains(key)) throw ValidationError("duplicate key '" + key + "'" + where);
        values[section][key] = trim(line.substr(eq + 1));
    }

    auto get = [&](const std::string& sec, const std::string& key) -> const std::string* {
        auto s = values.find(sec);
        if (s == values.end()) return nullptr;
        auto k = s->second.find(key);
        return k == s->second.end() ? nullptr : &k->second;
    };
    auto require = [&](const std::string& sec, const std::string& key) -> const std::string& {
        const std::string* v = get(sec, key);
        if (v == nullptr) throw ValidationError("missing " + sec + "." + key);
        return *v;
    };

    ProblemDefinition p;
    p.name = get("problem", "name") ? *get("problem", "name") : "file";
    if (const auto* v = get("problem", "m")) p.m = parse_int(*v, "m");
    if (const auto* v = get("problem", "d")) p.d = parse_int(*v, "d");
    if (const auto* v = get("problem", "k")) p.k = parse_int(*v, "k");
    if (p.m != 1 || p.d != 1) {
        throw ValidationError("problem files describe scalar problems (m = d = 1); use the registry for more");
    }
    p.T = parse_double(require("problem", "T"), "T");
    p.alpha = parse_double(require("problem", "alpha"), "alpha");
    p.x0 = parse_vector(require("problem", "x0"), "x0");
    if (const auto* v = get("problem", "seed")) {
        std::uint64_t seed = 0;
        const auto res = std::from_chars(v->data(), v->data() + v->size(), seed);
        if (res.ec != std::errc() || res.ptr != v->data() + v->size()) throw ValidationError("bad seed");
        p.seed = seed;
    }

    p.b = {require("coefficients", "b")};
    p.sigma = {require("coefficients", "sigma")};
    p.f = require("coefficients", "f");
    p.g = get("coefficients", "g") ? *get("coefficients", "g") : "0";
    p.phi = require("coefficients", "phi");

    const std::string& kind = require("control", "kind");
    if (kind == "finite") {
        const std::string& pts = require("control", "points");
        std::vector<Vector> points;
        if (p.k == 1) {
            for (const auto& part : split(pts, pts.find(';') != std::string::npos ? ';' : ',')) {
                points.push_back(Vector::Constant(1, parse_double(part, "points")));
            }
        } else {
            for (const auto& part : split(pts, ';')) {
                const auto v = parse_vector(part, "points");
                if (static_cast<int>(v.size()) != p.k) throw ValidationError("control point dimension mismatch");
                points.push_back(Eigen::Map<const Vector>(v.data(), p.k));
            }
        }
        p.U = ControlDomain::finite(std::move(points));
    } else if (kind == "box") {
        const auto lo = parse_vector(require("control", "lower"), "lower");
        const auto hi = parse_vector(require("control", "upper"), "upper");
        if (static_cast<int>(lo.size()) != p.k || static_cast<int>(hi.size()) != p.k) {
            throw ValidationError("box bound dimension mismatch");
        }
        p.U = ControlDomain::box(Eigen::Map<const Vector>(lo.data(), p.k), Eigen::Map<const Vector>(hi.data(), p.k));
    } else {
        throw ValidationError("control kind must be 'finite' or 'box'");
    }
    if (const auto* v = get("control", "candidate")) p.candidate = parse_vector(*v, "candidate");
    return p;
}

ProblemSpec load_problem(const std::string& source) {
    const auto names = registry_names();
    if (std::find(names.begin(), names.end(), source) != names.end()) return build_problem(registry_problem(source));
    if (!std::filesystem::is_regular_file(source)) throw ValidationError("unknown problem '" + source + "'");
    std::ifstream in(source);
    std::stringstream buf;
    buf << in.rdbuf();
    return build_problem(parse_problem_text(buf.str()));
}

}  // namespace vtsmp
