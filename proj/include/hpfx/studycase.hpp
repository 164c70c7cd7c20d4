#pragma once

// Study-case files: a strict line-oriented text format with [section] headers
// and key = value entries, the programmatic CIGRE-LV-style benchmark builder,
// and scenario transforms.
//
// Cable parameters are interpreted as per-km values applied to the segment
// lengths in metres. Impedance loads are series R-L per phase, sized from the
// given apparent power, power factor (lagging for consumption) and phase
// weights at the nominal phase voltage.

#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "hpfx/cider.hpp"
#include "hpfx/network.hpp"

namespace hpfx {

struct Bases {
    double power_w = 10e3;
    double voltage_v = 230.0;  // phase RMS
    double current_a() const { return power_w / (3.0 * voltage_v); }
};

struct SolverFileConfig {
    double tol_x = 1e-8;
    double tol_f = 1e-8;
    int max_iter = 200;
    std::string start = "flat";
};

struct TdsFileConfig {
    int samples_per_period = 2048;
    int settle_periods = 60;
    int capture_periods = 4;
    std::string integrator = "trapezoidal";
};

struct HarmonicRow {
    int h = 1;
    double magnitude = 0.0;  // fraction of nominal for voltages, amperes RMS for currents
    double phase_rad = 0.0;
};

struct TeSourceSpec {
    std::string node;
    bool forming = true;  // grid-forming by default; the benchmark uses following
    double v_nominal_v = 230.0;
    double s_sc_w = 0.0;
    double z_sc_ohm = 0.0;
    double r_to_x = 0.0;
    std::vector<HarmonicRow> harmonics;  // magnitudes as fraction of nominal

    double r_ohm() const { return z_sc_ohm * r_to_x / std::sqrt(1.0 + r_to_x * r_to_x); }
    double l_h(double f1) const {
        return z_sc_ohm / std::sqrt(1.0 + r_to_x * r_to_x) / (2.0 * kPi * f1);
    }
};

struct NeSourceSpec {
    std::string node;
    double y_r_ohm = 0.0;  // series R-L whose inverse is the Norton admittance; 0 = none
    double y_l_h = 0.0;
    std::vector<HarmonicRow> harmonics;  // current source rows, amperes RMS
};

struct FormingSpec {
    std::string node;
    std::string design = "FM-1";
    double v_set_v = 230.0;
    double f_set_hz = 50.0;
    Fm1Params params;
};

struct FollowingSpec {
    std::string node;
    std::string design = "FD-1";
    double p_w = 0.0;
    double q_var = 0.0;
    int order = 1;
    Fd1Params params;
};

struct LoadSpec {
    std::string node;
    double s_w = 0.0;  // negative = consumption
    double pf = 0.95;
    std::array<double, 3> weights{1.0 / 3, 1.0 / 3, 1.0 / 3};
};

using ResourceSpec =
    std::variant<TeSourceSpec, NeSourceSpec, FormingSpec, FollowingSpec, LoadSpec>;

struct BranchSpec {
    std::string from, to, line;
    double length_m = 0.0;
};

struct StudyCase {
    std::string name = "case";
    HarmonicSet spectrum{26, 50.0};
    Bases bases;
    SolverFileConfig solver;
    TdsFileConfig tds;
    std::vector<LineParams> lines;
    std::vector<BranchSpec> branches;
    std::vector<ResourceSpec> resources;

    const LineParams& line(const std::string& id) const {
        for (const auto& lp : lines)
            if (lp.id == id) return lp;
        throw ValidationError("unknown line id '" + id + "'");
    }
};

// Every following setpoint scaled by k; everything else untouched.
inline StudyCase apply_scale(const StudyCase& base, double k) {
    if (k <= 0.0) throw ValidationError("apply_scale: factor must be positive");
    StudyCase out = base;
    for (auto& res : out.resources)
        if (auto* f = std::get_if<FollowingSpec>(&res)) {
            f->p_w *= k;
            f->q_var *= k;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

// Shortest decimal that round-trips through double.
inline std::string fmt_num(double v) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v) return buf;
    }
    return buf;
}

inline std::string fmt_num(int v) { return std::to_string(v); }

}  // namespace detail

inline std::string serialize_study(const StudyCase& sc) {
    using detail::fmt_num;
    std::ostringstream os;
    os << "# hpfx study case\n";
    os << "[case]\nname = " << sc.name << "\n\n";
    os << "[spectrum]\nf1_hz = " << fmt_num(sc.spectrum.f1)
       << "\nh_max = " << sc.spectrum.h_max << "\n\n";
    os << "[bases]\npower_w = " << fmt_num(sc.bases.power_w)
       << "\nvoltage_v = " << fmt_num(sc.bases.voltage_v) << "\n\n";
    os << "[solver]\ntol_x = " << fmt_num(sc.solver.tol_x)
       << "\ntol_f = " << fmt_num(sc.solver.tol_f) << "\nmax_iter = " << sc.solver.max_iter
       << "\nstart = " << sc.solver.start << "\n\n";
    os << "[tds]\nsamples_per_period = " << sc.tds.samples_per_period
       << "\nsettle_periods = " << sc.tds.settle_periods
       << "\ncapture_periods = " << sc.tds.capture_periods
       << "\nintegrator = " << sc.tds.integrator << "\n\n";
    for (const auto& lp : sc.lines) {
        os << "[line " << lp.id << "]\n";
        os << "r1_ohm_per_km = " << fmt_num(lp.r1_ohm_per_km) << "\n";
        os << "r0_ohm_per_km = " << fmt_num(lp.r0_ohm_per_km) << "\n";
        os << "l1_mh_per_km = " << fmt_num(lp.l1_mh_per_km) << "\n";
        os << "l0_mh_per_km = " << fmt_num(lp.l0_mh_per_km) << "\n";
        os << "c1_nf_per_km = " << fmt_num(lp.c1_nf_per_km) << "\n";
        os << "c0_nf_per_km = " << fmt_num(lp.c0_nf_per_km) << "\n\n";
    }
    for (const auto& b : sc.branches)
        os << "[branch]\nfrom = " << b.from << "\nto = " << b.to << "\nline = " << b.line
           << "\nlength_m = " << fmt_num(b.length_m) << "\n\n";
    for (const auto& res : sc.resources) {
        if (const auto* te = std::get_if<TeSourceSpec>(&res)) {
            os << "[resource te_source " << te->node << "]\n";
            os << "mode = " << (te->forming ? "forming" : "following") << "\n";
            os << "v_nominal_v = " << fmt_num(te->v_nominal_v) << "\n";
            os << "s_sc_w = " << fmt_num(te->s_sc_w) << "\n";
            os << "z_sc_ohm = " << fmt_num(te->z_sc_ohm) << "\n";
            os << "r_to_x = " << fmt_num(te->r_to_x) << "\n";
            for (const auto& row : te->harmonics)
                os << "harmonic = " << row.h << " " << fmt_num(row.magnitude) << " "
                   << fmt_num(row.phase_rad) << "\n";
            os << "\n";
        } else if (const auto* ne = std::get_if<NeSourceSpec>(&res)) {
            os << "[resource ne_source " << ne->node << "]\n";
            os << "y_r_ohm = " << fmt_num(ne->y_r_ohm) << "\n";
            os << "y_l_h = " << fmt_num(ne->y_l_h) << "\n";
            for (const auto& row : ne->harmonics)
                os << "harmonic = " << row.h << " " << fmt_num(row.magnitude) << " "
                   << fmt_num(row.phase_rad) << "\n";
            os << "\n";
        } else if (const auto* fm = std::get_if<FormingSpec>(&res)) {
            os << "[resource forming " << fm->node << "]\n";
            os << "design = " << fm->design << "\n";
            os << "v_set_v = " << fmt_num(fm->v_set_v) << "\n";
            os << "f_set_hz = " << fmt_num(fm->f_set_hz) << "\n";
            os << "filter_l_h = " << fmt_num(fm->params.filter_l_h) << "\n";
            os << "filter_r_ohm = " << fmt_num(fm->params.filter_r_ohm) << "\n";
            os << "filter_c_f = " << fmt_num(fm->params.filter_c_f) << "\n";
            os << "damping_r_ohm = " << fmt_num(fm->params.damping_r_ohm) << "\n";
            os << "kp_v = " << fmt_num(fm->params.kp_v) << "\n";
            os << "ki_v = " << fmt_num(fm->params.ki_v) << "\n";
            os << "kp_c = " << fmt_num(fm->params.kp_c) << "\n";
            os << "ki_c = " << fmt_num(fm->params.ki_c) << "\n";
            os << "interface = "
               << (fm->params.interface == GridInterface::ThreeLeg ? "three_leg" : "four_leg")
               << "\n\n";
        } else if (const auto* fd = std::get_if<FollowingSpec>(&res)) {
            os << "[resource following " << fd->node << "]\n";
            os << "design = " << fd->design << "\n";
            os << "p_w = " << fmt_num(fd->p_w) << "\n";
            os << "q_var = " << fmt_num(fd->q_var) << "\n";
            os << "order = " << fd->order << "\n";
            os << "filter_l_h = " << fmt_num(fd->params.filter_l_h) << "\n";
            os << "filter_r_ohm = " << fmt_num(fd->params.filter_r_ohm) << "\n";
            os << "kp_a = " << fmt_num(fd->params.kp_a) << "\n";
            os << "ki_a = " << fmt_num(fd->params.ki_a) << "\n";
            os << "interface = "
               << (fd->params.interface == GridInterface::ThreeLeg ? "three_leg" : "four_leg")
               << "\n\n";
        } else if (const auto* ld = std::get_if<LoadSpec>(&res)) {
            os << "[resource impedance_load " << ld->node << "]\n";
            os << "s_w = " << fmt_num(ld->s_w) << "\n";
            os << "pf = " << fmt_num(ld->pf) << "\n";
            os << "weights = " << fmt_num(ld->weights[0]) << " " << fmt_num(ld->weights[1])
               << " " << fmt_num(ld->weights[2]) << "\n\n";
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

struct Parser {
    std::istringstream in;
    int line_no = 0;
    std::string current;

    explicit Parser(const std::string& text) : in(text) {}

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("study case line " + std::to_string(line_no) + ": " + msg);
    }

    bool next_line(std::string& out) {
        while (std::getline(in, out)) {
            ++line_no;
            const auto hash = out.find('#');
            if (hash != std::string::npos) out.erase(hash);
            while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back())))
                out.pop_back();
            std::size_t i = 0;
            while (i < out.size() && std::isspace(static_cast<unsigned char>(out[i]))) ++i;
            out.erase(0, i);
            if (!out.empty()) return true;
        }
        return false;
    }

    double to_num(const std::string& s) const {
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) fail("malformed number '" + s + "'");
            return v;
        } catch (const ParseError&) {
            throw;
        } catch (...) {
            fail("malformed number '" + s + "'");
        }
    }
    int to_int(const std::string& s) const {
        const double v = to_num(s);
        if (v != static_cast<int>(v)) fail("expected integer, got '" + s + "'");
        return static_cast<int>(v);
    }
};

inline std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

}  // namespace detail

inline StudyCase parse_study(const std::string& text) {
    detail::Parser p(text);
    StudyCase sc;
    sc.lines.clear();
    sc.resources.clear();

    std::string line;
    std::string section;
    std::vector<std::string> section_args;
    // deferred handles to the object being filled
    LineParams* cur_line = nullptr;
    BranchSpec* cur_branch = nullptr;
    ResourceSpec* cur_res = nullptr;
    bool any = false;

    auto open_section = [&](const std::string& hdr) {
        const auto toks = detail::split_ws(hdr);
        if (toks.empty()) p.fail("empty section header");
        section = toks[0];
        section_args.assign(toks.begin() + 1, toks.end());
        cur_line = nullptr;
        cur_branch = nullptr;
        cur_res = nullptr;
        if (section == "line") {
            if (section_args.size() != 1) p.fail("[line] needs exactly one id");
            sc.lines.push_back(LineParams{section_args[0]});
            cur_line = &sc.lines.back();
        } else if (section == "branch") {
            sc.branches.push_back({});
            cur_branch = &sc.branches.back();
        } else if (section == "resource") {
            if (section_args.size() != 2) p.fail("[resource] needs kind and node");
            const std::string& kind = section_args[0];
            const std::string& node = section_args[1];
            if (kind == "te_source")
                sc.resources.push_back(TeSourceSpec{node});
            else if (kind == "ne_source")
                sc.resources.push_back(NeSourceSpec{node});
            else if (kind == "forming")
                sc.resources.push_back(FormingSpec{node});
            else if (kind == "following")
                sc.resources.push_back(FollowingSpec{node});
            else if (kind == "impedance_load")
                sc.resources.push_back(LoadSpec{node});
            else
                p.fail("unknown resource kind '" + kind + "'");
            cur_res = &sc.resources.back();
        } else if (section != "case" && section != "spectrum" && section != "bases" &&
                   section != "solver" && section != "tds") {
            p.fail("unknown section [" + section + "]");
        }
    };

    while (p.next_line(line)) {
        any = true;
        if (line.front() == '[') {
            if (line.back() != ']') p.fail("unterminated section header");
            open_section(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) p.fail("expected key = value");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back())))
            key.pop_back();
        std::size_t vi = 0;
        while (vi < val.size() && std::isspace(static_cast<unsigned char>(val[vi]))) ++vi;
        val.erase(0, vi);
        if (key.empty() || val.empty()) p.fail("empty key or value");

        auto unknown = [&]() { p.fail("unknown key '" + key + "' in [" + section + "]"); };

        if (section == "case") {
            if (key == "name")
                sc.name = val;
            else
                unknown();
        } else if (section == "spectrum") {
            if (key == "f1_hz")
                sc.spectrum.f1 = p.to_num(val);
            else if (key == "h_max")
                sc.spectrum.h_max = p.to_int(val);
            else
                unknown();
        } else if (section == "bases") {
            if (key == "power_w")
                sc.bases.power_w = p.to_num(val);
            else if (key == "voltage_v")
                sc.bases.voltage_v = p.to_num(val);
            else
                unknown();
        } else if (section == "solver") {
            if (key == "tol_x")
                sc.solver.tol_x = p.to_num(val);
            else if (key == "tol_f")
                sc.solver.tol_f = p.to_num(val);
            else if (key == "max_iter")
                sc.solver.max_iter = p.to_int(val);
            else if (key == "start")
                sc.solver.start = val;
            else
                unknown();
        } else if (section == "tds") {
            if (key == "samples_per_period")
                sc.tds.samples_per_period = p.to_int(val);
            else if (key == "settle_periods")
                sc.tds.settle_periods = p.to_int(val);
            else if (key == "capture_periods")
                sc.tds.capture_periods = p.to_int(val);
            else if (key == "integrator")
                sc.tds.integrator = val;
            else
                unknown();
        } else if (cur_line) {
            if (key == "r1_ohm_per_km")
                cur_line->r1_ohm_per_km = p.to_num(val);
            else if (key == "r0_ohm_per_km")
                cur_line->r0_ohm_per_km = p.to_num(val);
            else if (key == "l1_mh_per_km")
                cur_line->l1_mh_per_km = p.to_num(val);
            else if (key == "l0_mh_per_km")
                cur_line->l0_mh_per_km = p.to_num(val);
            else if (key == "c1_nf_per_km")
                cur_line->c1_nf_per_km = p.to_num(val);
            else if (key == "c0_nf_per_km")
                cur_line->c0_nf_per_km = p.to_num(val);
            else
                unknown();
        } else if (cur_branch) {
            if (key == "from")
                cur_branch->from = val;
            else if (key == "to")
                cur_branch->to = val;
            else if (key == "line")
                cur_branch->line = val;
            else if (key == "length_m")
                cur_branch->length_m = p.to_num(val);
            else
                unknown();
        } else if (cur_res) {
            auto parse_harmonic_row = [&](const std::string& v) {
                const auto toks = detail::split_ws(v);
                if (toks.size() != 3) p.fail("harmonic rows are 'h magnitude phase_rad'");
                return HarmonicRow{p.to_int(toks[0]), p.to_num(toks[1]), p.to_num(toks[2])};
            };
            if (auto* te = std::get_if<TeSourceSpec>(cur_res)) {
                if (key == "mode") {
                    if (val != "forming" && val != "following") p.fail("bad te mode");
                    te->forming = (val == "forming");
                } else if (key == "v_nominal_v")
                    te->v_nominal_v = p.to_num(val);
                else if (key == "s_sc_w")
                    te->s_sc_w = p.to_num(val);
                else if (key == "z_sc_ohm")
                    te->z_sc_ohm = p.to_num(val);
                else if (key == "r_to_x")
                    te->r_to_x = p.to_num(val);
                else if (key == "harmonic")
                    te->harmonics.push_back(parse_harmonic_row(val));
                else
                    unknown();
            } else if (auto* ne = std::get_if<NeSourceSpec>(cur_res)) {
                if (key == "y_r_ohm")
                    ne->y_r_ohm = p.to_num(val);
                else if (key == "y_l_h")
                    ne->y_l_h = p.to_num(val);
                else if (key == "harmonic")
                    ne->harmonics.push_back(parse_harmonic_row(val));
                else
                    unknown();
            } else if (auto* fm = std::get_if<FormingSpec>(cur_res)) {
                if (key == "design") {
                    if (val != "FM-1") p.fail("unknown forming design '" + val + "'");
                    fm->design = val;
                } else if (key == "v_set_v")
                    fm->v_set_v = p.to_num(val);
                else if (key == "f_set_hz")
                    fm->f_set_hz = p.to_num(val);
                else if (key == "filter_l_h")
                    fm->params.filter_l_h = p.to_num(val);
                else if (key == "filter_r_ohm")
                    fm->params.filter_r_ohm = p.to_num(val);
                else if (key == "filter_c_f")
                    fm->params.filter_c_f = p.to_num(val);
                else if (key == "damping_r_ohm")
                    fm->params.damping_r_ohm = p.to_num(val);
                else if (key == "kp_v")
                    fm->params.kp_v = p.to_num(val);
                else if (key == "ki_v")
                    fm->params.ki_v = p.to_num(val);
                else if (key == "kp_c")
                    fm->params.kp_c = p.to_num(val);
                else if (key == "ki_c")
                    fm->params.ki_c = p.to_num(val);
                else if (key == "interface") {
                    if (val == "three_leg")
                        fm->params.interface = GridInterface::ThreeLeg;
                    else if (val == "four_leg")
                        fm->params.interface = GridInterface::FourLeg;
                    else
                        p.fail("bad interface '" + val + "'");
                } else
                    unknown();
            } else if (auto* fd = std::get_if<FollowingSpec>(cur_res)) {
                if (key == "design") {
                    if (val != "FD-1") p.fail("unknown following design '" + val + "'");
                    fd->design = val;
                } else if (key == "p_w")
                    fd->p_w = p.to_num(val);
                else if (key == "q_var")
                    fd->q_var = p.to_num(val);
                else if (key == "order")
                    fd->order = p.to_int(val);
                else if (key == "filter_l_h")
                    fd->params.filter_l_h = p.to_num(val);
                else if (key == "filter_r_ohm")
                    fd->params.filter_r_ohm = p.to_num(val);
                else if (key == "kp_a")
                    fd->params.kp_a = p.to_num(val);
                else if (key == "ki_a")
                    fd->params.ki_a = p.to_num(val);
                else if (key == "interface") {
                    if (val == "three_leg")
                        fd->params.interface = GridInterface::ThreeLeg;
                    else if (val == "four_leg")
                        fd->params.interface = GridInterface::FourLeg;
                    else
                        p.fail("bad interface '" + val + "'");
                } else
                    unknown();
            } else if (auto* ld = std::get_if<LoadSpec>(cur_res)) {
                if (key == "s_w")
                    ld->s_w = p.to_num(val);
                else if (key == "pf")
                    ld->pf = p.to_num(val);
                else if (key == "weights") {
                    const auto toks = detail::split_ws(val);
                    if (toks.size() != 3) p.fail("weights need three entries");
                    for (int i = 0; i < 3; ++i) ld->weights[i] = p.to_num(toks[i]);
                } else
                    unknown();
            }
        } else {
            p.fail("key outside of any section");
        }
    }
    if (!any) throw ParseError("study case: empty file");
    return sc;
}

inline StudyCase parse_study_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open study case '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_study(ss.str());
}

// ---------------------------------------------------------------------------
// Derived model objects
// ---------------------------------------------------------------------------

inline PassiveLoad make_passive_load(const LoadSpec& ld, int node_index, double v_phase_rms,
                                     double f1) {
    PassiveLoad out;
    out.node = node_index;
    const double s_total = std::abs(ld.s_w);
    const double phi = std::acos(ld.pf);
    for (int p = 0; p < 3; ++p) {
        const double s_p = s_total * ld.weights[p];
        if (s_p <= 0.0)
            throw ValidationError("impedance load at phase " + std::to_string(p) +
                                  " has nonpositive power");
        const double z = v_phase_rms * v_phase_rms / s_p;
        out.r_ohm(p) = z * ld.pf;
        out.l_h(p) = z * std::sin(phi) / (2.0 * kPi * f1);
    }
    return out;
}

// Balanced polyphase source spectrum from a harmonic table. Phase p of
// harmonic h carries the time shift -h*2*pi*p/3 of a waveform delayed by a
// third of a period per phase.
inline SpectralVector source_spectrum(const std::vector<HarmonicRow>& rows, double scale_rms,
                                      const HarmonicSet& h) {
    SpectralVector v(h, 3);
    for (const auto& row : rows) {
        if (row.h <= 0) throw ValidationError("source harmonic orders must be positive");
        if (row.h > h.h_max) continue;  // clipped by the configured spectrum
        const double amp = std::sqrt(2.0) * scale_rms * row.magnitude / 2.0;
        for (int p = 0; p < 3; ++p) {
            const Complex c =
                amp * std::exp(Complex(0.0, row.phase_rad - row.h * 2.0 * kPi * p / 3.0));
            v(row.h, p) += c;
            v(-row.h, p) += std::conj(c);
        }
    }
    return v;
}

inline GridTopology build_topology(const StudyCase& sc) {
    GridTopology topo;
    // collect node names: branch endpoints and resource nodes
    auto add_node = [&](const std::string& n) {
        for (const auto& existing : topo.nodes)
            if (existing == n) return;
        topo.nodes.push_back(n);
    };
    for (const auto& b : sc.branches) {
        add_node(b.from);
        add_node(b.to);
    }
    for (const auto& b : sc.branches) {
        Branch br;
        br.from = topo.node_index(b.from);
        br.to = topo.node_index(b.to);
        br.line = sc.line(b.line);
        br.length_m = b.length_m;
        topo.branches.push_back(br);
    }
    for (const auto& res : sc.resources) {
        if (const auto* te = std::get_if<TeSourceSpec>(&res)) {
            const int n = topo.node_index(te->node);
            (te->forming ? topo.forming_nodes : topo.following_nodes).push_back(n);
        } else if (const auto* ne = std::get_if<NeSourceSpec>(&res)) {
            topo.following_nodes.push_back(topo.node_index(ne->node));
        } else if (const auto* fm = std::get_if<FormingSpec>(&res)) {
            topo.forming_nodes.push_back(topo.node_index(fm->node));
        } else if (const auto* fd = std::get_if<FollowingSpec>(&res)) {
            topo.following_nodes.push_back(topo.node_index(fd->node));
        } else if (const auto* ld = std::get_if<LoadSpec>(&res)) {
            topo.loads.push_back(
                make_passive_load(*ld, topo.node_index(ld->node), sc.bases.voltage_v,
                                  sc.spectrum.f1));
        }
    }
    topo.validate();
    return topo;
}

// ---------------------------------------------------------------------------
// Benchmark builders
// ---------------------------------------------------------------------------

inline double q_from_pf(double p_w, double pf) {
    return p_w * std::tan(std::acos(pf));
}

// CIGRE low-voltage style benchmark: 22 nodes, UG1 feeder spine, UG3 stubs,
// substation Thevenin source with a distorted EMF, one grid-forming CIDER,
// four PQ CIDERs and four unbalanced impedance loads.
inline StudyCase build_cigre_lv() {
    StudyCase sc;
    sc.name = "cigre_lv";
    sc.spectrum = HarmonicSet(26, 50.0);
    sc.bases = Bases{10e3, 230.0};
    sc.lines = {{"UG1", 0.162, 0.529, 0.262, 1.185, 637.0, 388.0},
                {"UG3", 0.822, 1.794, 0.270, 3.895, 637.0, 388.0}};
    auto seg = [&](const char* a, const char* b, const char* id, double len) {
        sc.branches.push_back({a, b, id, len});
    };
    seg("N1", "N2", "UG1", 35);
    seg("N2", "N3", "UG1", 35);
    seg("N3", "N4", "UG1", 35);
    seg("N4", "N5", "UG1", 35);
    seg("N5", "N6", "UG1", 35);
    seg("N6", "N7", "UG1", 35);
    seg("N7", "N8", "UG1", 35);
    seg("N8", "N9", "UG1", 35);
    seg("N9", "N10", "UG1", 35);
    seg("N3", "N11", "UG3", 30);
    seg("N5", "N12", "UG3", 35);
    seg("N12", "N13", "UG3", 35);
    seg("N13", "N14", "UG3", 35);
    seg("N14", "N15", "UG3", 30);
    seg("N6", "N16", "UG3", 30);
    seg("N9", "N17", "UG3", 30);
    seg("N10", "N18", "UG3", 30);
    seg("N12", "N19", "UG3", 30);
    seg("N8", "N20", "UG3", 30);
    seg("N2", "N21", "UG3", 30);
    seg("N13", "N22", "UG3", 30);

    TeSourceSpec te;
    te.node = "N1";
    te.forming = false;  // the benchmark counts the substation as a follower
    te.v_nominal_v = 230.0;
    te.s_sc_w = 3.85e6;
    te.z_sc_ohm = 13.7e-3;
    te.r_to_x = 0.271;
    te.harmonics = {{1, 1.0, 0.0},          {5, 0.06, kPi / 8.0},  {7, 0.05, kPi / 12.0},
                    {11, 0.035, kPi / 16.0}, {13, 0.03, kPi / 8.0}, {17, 0.02, kPi / 12.0},
                    {19, 0.015, kPi / 16.0}, {23, 0.015, kPi / 16.0}};
    sc.resources.push_back(te);

    FormingSpec fm;
    fm.node = "N18";
    fm.v_set_v = 230.0;
    fm.f_set_hz = 50.0;
    sc.resources.push_back(fm);

    auto pq = [&](const char* node, double p_kw) {
        FollowingSpec fd;
        fd.node = node;
        fd.p_w = p_kw * 1e3;
        fd.q_var = q_from_pf(fd.p_w, 0.95);
        sc.resources.push_back(fd);
    };
    pq("N11", 15.0);
    pq("N15", 52.0);
    pq("N16", 55.0);
    pq("N17", 35.0);

    auto zload = [&](const char* node, double s_kw, double w0, double w1, double w2) {
        LoadSpec ld;
        ld.node = node;
        ld.s_w = s_kw * 1e3;
        ld.pf = 0.95;
        ld.weights = {w0, w1, w2};
        sc.resources.push_back(ld);
    };
    zload("N19", -51.2, 0.31, 0.50, 0.19);
    zload("N20", -51.7, 0.45, 0.23, 0.32);
    zload("N21", -61.5, 0.24, 0.39, 0.37);
    zload("N22", -61.9, 0.31, 0.56, 0.13);
    return sc;
}

}  // namespace hpfx
