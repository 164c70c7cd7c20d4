#include <catch2/catch_amalgamated.hpp>

#include "hpfx/network.hpp"
#include "oracles.hpp"

using namespace hpfx;
using Catch::Approx;

namespace {

LineParams ug1() {
    return {"UG1", 0.162, 0.529, 0.262, 1.185, 637.0, 388.0};
}
LineParams ug3() {
    return {"UG3", 0.822, 1.794, 0.270, 3.895, 637.0, 388.0};
}

GridTopology chain4() {
    GridTopology topo;
    topo.nodes = {"N1", "N2", "N3", "N4"};
    topo.branches.push_back({0, 1, ug1(), 35.0});
    topo.branches.push_back({1, 2, ug3(), 30.0});
    topo.branches.push_back({2, 3, ug3(), 35.0});
    PassiveLoad ld;
    ld.node = 2;
    ld.r_ohm = Eigen::Vector3d(3.0, 4.0, 5.0);
    ld.l_h = Eigen::Vector3d(1e-3, 2e-3, 1.5e-3);
    topo.loads.push_back(ld);
    topo.forming_nodes = {0};
    topo.following_nodes = {3};
    return topo;
}

}  // namespace

TEST_CASE("sequence to phase reproduces the UG1 sequence impedances") {
    const auto [z, ysh] = sequence_to_phase(ug1(), 1000.0, 50.0);  // per km
    // recover sequence values by similarity transform
    const MatrixXcd seq = fortescue_inverse() * z * fortescue();
    REQUIRE(std::abs(seq(1, 1) - Complex(0.162, 2.0 * kPi * 50.0 * 0.262e-3)) < 1e-12);
    REQUIRE(std::abs(seq(0, 0) - Complex(0.529, 2.0 * kPi * 50.0 * 1.185e-3)) < 1e-12);
    REQUIRE(std::abs(seq(1, 1).imag() - 0.0823) < 1e-4);
    REQUIRE(std::abs(seq(0, 0).imag() - 0.3723) < 1e-4);
}

TEST_CASE("balanced line parameters give a scalar phase matrix") {
    LineParams lp{"bal", 0.2, 0.2, 0.5, 0.5, 0.0, 0.0};
    const auto [z, ysh] = sequence_to_phase(lp, 500.0, 50.0);
    const Complex want = Complex(0.2, 2.0 * kPi * 50.0 * 0.5e-3) * 0.5;
    REQUIRE((z - want * MatrixXcd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("dc evaluation is purely resistive") {
    const auto [z, ysh] = sequence_to_phase(ug1(), 35.0, 0.0);
    REQUIRE(z.imag().cwiseAbs().maxCoeff() < 1e-14 * z.real().cwiseAbs().maxCoeff());
    REQUIRE(ysh.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE_THROWS_AS(sequence_to_phase(ug1(), 0.0, 50.0), ValidationError);
}

TEST_CASE("single branch admittance") {
    GridTopology topo;
    topo.nodes = {"A", "B"};
    topo.branches.push_back({0, 1, ug1(), 35.0});
    topo.include_line_shunts = false;
    topo.forming_nodes = {0};
    const auto adm = assemble_admittance(topo, 50.0);
    const MatrixXcd yb = topo.branches[0].series_impedance(50.0).inverse();
    REQUIRE((adm.y.block(0, 0, 3, 3) - yb).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((adm.y.block(0, 3, 3, 3) + yb).cwiseAbs().maxCoeff() < 1e-12);
    // adding a load at node B stamps its admittance on the (B,B) block
    PassiveLoad ld;
    ld.node = 1;
    ld.r_ohm = Eigen::Vector3d(2.0, 2.0, 2.0);
    ld.l_h = Eigen::Vector3d(1e-3, 1e-3, 1e-3);
    topo.loads.push_back(ld);
    const auto adm2 = assemble_admittance(topo, 50.0);
    REQUIRE((adm2.y - adm.y - MatrixXcd((MatrixXcd::Zero(6, 6))).eval()).size() == 36);
    REQUIRE(((adm2.y.block(3, 3, 3, 3) - adm.y.block(3, 3, 3, 3)) - ld.admittance(50.0))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
}

TEST_CASE("assembled admittance matches the element-stamping oracle") {
    const GridTopology topo = chain4();
    for (double f : {0.0, 50.0, 250.0, 1300.0}) {
        const auto adm = assemble_admittance(topo, f);
        REQUIRE((adm.y - oracles::stamped_admittance(topo, f)).cwiseAbs().maxCoeff() < 1e-12);
        const double scale = adm.y.cwiseAbs().maxCoeff();
        REQUIRE((adm.y - adm.y.transpose()).cwiseAbs().maxCoeff() < 1e-12 * scale);
    }
}

TEST_CASE("hypothesis audit flags a non-lossy branch") {
    GridTopology topo = chain4();
    topo.branches[0].line.r1_ohm_per_km = -0.5;  // active element
    const auto rep = audit_hypotheses(topo, 50.0);
    REQUIRE_FALSE(rep.ok());
}

TEST_CASE("hybrid partition of a two node system") {
    // one forming, one following; blocks verified by 2x2 block elimination
    GridTopology topo;
    topo.nodes = {"S", "R"};
    topo.branches.push_back({0, 1, ug1(), 35.0});
    topo.include_line_shunts = false;
    topo.forming_nodes = {0};
    topo.following_nodes = {1};
    const auto adm = assemble_admittance(topo, 150.0);
    const auto hb = hybrid_partition(adm, {0}, {1});
    const MatrixXcd yss = adm.y.block(0, 0, 3, 3);
    const MatrixXcd ysr = adm.y.block(0, 3, 3, 3);
    const MatrixXcd yrs = adm.y.block(3, 0, 3, 3);
    const MatrixXcd yrr = adm.y.block(3, 3, 3, 3);
    const MatrixXcd yss_inv = yss.inverse();
    REQUIRE((hb.ss - yss_inv).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((hb.sr + yss_inv * ysr).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((hb.rs - yrs * yss_inv).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((hb.rr - (yrr - yrs * yss_inv * ysr)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("hybrid blocks satisfy the admittance relation on random vectors") {
    const GridTopology topo = chain4();
    const auto adm = assemble_admittance(topo, 250.0);
    // retain all four nodes: S = {0}, R = {1,2,3}
    const auto hb = hybrid_partition(adm, {0}, {1, 2, 3});
    for (int trial = 0; trial < 20; ++trial) {
        const VectorXcd i_s = oracles::random_vector(3);
        const VectorXcd v_r = oracles::random_vector(9);
        const VectorXcd v_s = hb.ss * i_s + hb.sr * v_r;
        const VectorXcd i_r = hb.rs * i_s + hb.rr * v_r;
        VectorXcd v(12), i_want(12);
        v.head(3) = v_s;
        v.tail(9) = v_r;
        i_want.head(3) = i_s;
        i_want.tail(9) = i_r;
        const VectorXcd i_got = adm.y * v;
        REQUIRE(inf_norm(VectorXcd(i_got - i_want)) / std::max(1.0, inf_norm(i_want)) < 1e-9);
    }
}

TEST_CASE("hybrid partition contract checks") {
    const GridTopology topo = chain4();
    const auto adm = assemble_admittance(topo, 50.0);
    REQUIRE_THROWS_AS(hybrid_partition(adm, {}, {0, 1, 2, 3}), ValidationError);
    REQUIRE_THROWS_AS(hybrid_partition(adm, {0}, {1}), ShapeError);
}

TEST_CASE("kron reduction is consistent with zero injection") {
    const GridTopology topo = chain4();
    const auto adm = assemble_admittance(topo, 350.0);
    // eliminate N2, N3 (indices 1, 2), keep S = {0}, R = {3}
    const auto kron = KronReduction::eliminate(adm, {0, 3}, {1, 2});
    const auto hb = hybrid_partition({adm.f, kron.y_reduced}, {0}, {1});
    // oracle: solve the full system with zero injection at the junctions
    for (int trial = 0; trial < 5; ++trial) {
        const VectorXcd i_s = oracles::random_vector(3);
        const VectorXcd v_r = oracles::random_vector(3);
        const VectorXcd v_s = hb.ss * i_s + hb.sr * v_r;
        const VectorXcd i_r = hb.rs * i_s + hb.rr * v_r;
        // full-system check: with V at retained nodes and recovered voltages
        // at junctions, injections must be (i_s, 0, 0, i_r)
        VectorXcd v_ret(6);
        v_ret.head(3) = v_s;
        v_ret.tail(3) = v_r;
        const VectorXcd v_elim = kron.recover * v_ret;
        VectorXcd v_full(12);
        v_full.segment(0, 3) = v_s;
        v_full.segment(3, 3) = v_elim.segment(0, 3);
        v_full.segment(6, 3) = v_elim.segment(3, 3);
        v_full.segment(9, 3) = v_r;
        const VectorXcd inj = adm.y * v_full;
        REQUIRE(inf_norm(VectorXcd(inj.segment(3, 6))) < 1e-9 * std::max(1.0, inf_norm(inj)));
        REQUIRE(inf_norm(VectorXcd(inj.head(3) - i_s)) < 1e-9 * std::max(1.0, inf_norm(i_s)));
        REQUIRE(inf_norm(VectorXcd(inj.tail(3) - i_r)) < 1e-9 * std::max(1.0, inf_norm(inj)));
    }
}

TEST_CASE("permutation matches the explicit index enumeration") {
    HarmonicSet h(1, 50.0);
    const Permutation p = build_permutation(2, h);
    // resource order (s,h): (1,-1),(1,0),(1,1),(2,-1),(2,0),(2,1)
    // grid order (h,s):     (-1,1),(-1,2),(0,1),(0,2),(1,1),(1,2)
    const std::vector<int> want = {0, 2, 4, 1, 3, 5};
    REQUIRE(p.grid_of == want);
    // |S| = 1: identity
    const Permutation p1 = build_permutation(1, HarmonicSet(3, 50.0));
    for (std::size_t i = 0; i < p1.grid_of.size(); ++i)
        REQUIRE(p1.grid_of[i] == static_cast<int>(i));
}

TEST_CASE("permutations are orthogonal and norm preserving") {
    HarmonicSet h(3, 50.0);
    const Permutation p = build_permutation(4, h);
    const MatrixXcd dense = p.dense();
    REQUIRE((dense * dense.transpose() - MatrixXcd::Identity(dense.rows(), dense.cols()))
                .cwiseAbs()
                .maxCoeff() == 0.0);
    const VectorXcd x = oracles::random_vector(p.dim());
    REQUIRE(inf_norm(p.to_resource(x)) == Approx(inf_norm(x)));
    REQUIRE(inf_norm(VectorXcd(p.to_grid(p.to_resource(x)) - x)) == 0.0);
    // round trip on matrices
    const MatrixXcd m = oracles::random_matrix(static_cast<int>(p.dim()),
                                               static_cast<int>(p.dim()));
    const MatrixXcd fwd = p.resort_rows_cols(m, p);
    REQUIRE((dense * m * dense.transpose() - fwd).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lift hybrid: grid sorted blocks are diagonal, resource sorted agree") {
    const GridTopology topo = chain4();
    HarmonicSet h(2, 50.0);
    std::map<int, HybridBlocks> per_h;
    for (int hh = -2; hh <= 2; ++hh) {
        const auto adm = assemble_admittance(topo, std::abs(h.freq(hh)) == 0.0 ? 0.0 : h.freq(hh));
        per_h[hh] = hybrid_partition(adm, {0}, {1, 2, 3});
    }
    const auto lifted = lift_hybrid(per_h, h, 1, 3);
    // grid-sorted lift is block diagonal over h
    for (int hi = -2; hi <= 2; ++hi)
        for (int hj = -2; hj <= 2; ++hj) {
            if (hi == hj) continue;
            REQUIRE(lifted.hat_ss.block(h.index(hi) * 3, h.index(hj) * 3, 3, 3).norm() == 0.0);
            REQUIRE(lifted.hat_rr.block(h.index(hi) * 9, h.index(hj) * 9, 9, 9).norm() == 0.0);
        }
    // entry-by-entry index formula check against a brute-force reorder
    const MatrixXcd p_s = lifted.perm.p_s.dense();
    const MatrixXcd p_r = lifted.perm.p_r.dense();
    REQUIRE((lifted.tld_ss - p_s * lifted.hat_ss * p_s.transpose()).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((lifted.tld_sr - p_s * lifted.hat_sr * p_r.transpose()).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((lifted.tld_rs - p_r * lifted.hat_rs * p_s.transpose()).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((lifted.tld_rr - p_r * lifted.hat_rr * p_r.transpose()).cwiseAbs().maxCoeff() == 0.0);
    // h_max = 0 degenerates to the single-frequency block
    std::map<int, HybridBlocks> one{{0, per_h[0]}};
    const auto l0 = lift_hybrid(one, HarmonicSet(0, 50.0), 1, 3);
    REQUIRE((l0.hat_ss - per_h[0].ss).cwiseAbs().maxCoeff() == 0.0);
    // missing frequency rejected
    std::map<int, HybridBlocks> missing{{0, per_h[0]}};
    REQUIRE_THROWS_AS(lift_hybrid(missing, h, 1, 3), ValidationError);
}

TEST_CASE("topology validation") {
    GridTopology topo = chain4();
    topo.forming_nodes = {};
    REQUIRE_THROWS_AS(topo.validate(), ValidationError);
    topo = chain4();
    topo.branches.pop_back();  // disconnect N4
    REQUIRE_THROWS_AS(topo.validate(), ValidationError);
    topo = chain4();
    topo.following_nodes = {0};
    REQUIRE_THROWS_AS(topo.validate(), ValidationError);
}
