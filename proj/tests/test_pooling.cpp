#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "grouppool/pooling.hpp"
#include "support/attention_invariants.hpp"
#include "support/finite_diff.hpp"

using namespace grouppool;

namespace {

std::vector<double> rand_vec(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Flat layout: w, b, u_ctx.
AttentionParams attn_from_flat(int a, int d, const std::vector<double>& flat) {
  AttentionParams p(a, d);
  std::size_t k = 0;
  for (auto& x : p.w.data) x = flat[k++];
  for (auto& x : p.b.data) x = flat[k++];
  for (auto& x : p.u_ctx.data) x = flat[k++];
  REQUIRE(k == flat.size());
  return p;
}

}  // namespace

TEST_CASE("scheme names round-trip and reject unknowns") {
  for (auto s : {PoolingScheme::kMax, PoolingScheme::kAvg, PoolingScheme::kGap,
                 PoolingScheme::kHap, PoolingScheme::kSubgroupGap})
    CHECK(parse_scheme(scheme_name(s)) == s);
  CHECK(scheme_name(PoolingScheme::kSubgroupGap) == "subgroup-gap");
  CHECK_THROWS_AS(parse_scheme("mean"), ConfigError);
  CHECK(!scheme_has_traces(PoolingScheme::kMax));
  CHECK(!scheme_has_traces(PoolingScheme::kAvg));
  CHECK(scheme_has_traces(PoolingScheme::kGap));
  CHECK(scheme_has_traces(PoolingScheme::kHap));
  CHECK(scheme_has_traces(PoolingScheme::kSubgroupGap));
}

TEST_CASE("max and avg pooling reducers") {
  Tape t;
  auto p1 = t.vec(std::vector<double>{1.0, 5.0});
  auto p2 = t.vec(std::vector<double>{4.0, 2.0});
  std::vector<Value> ps{p1, p2};
  auto mx = t.max_pool(ps);
  CHECK(t.value(mx)[0] == 4.0);
  CHECK(t.value(mx)[1] == 5.0);
  auto av = t.avg_pool(ps);
  CHECK(t.value(av)[0] == 2.5);
  CHECK(t.value(av)[1] == 3.5);

  std::vector<Value> rev{p2, p1};
  CHECK(t.value_vec(t.max_pool(rev)) == t.value_vec(mx));
  CHECK(t.value_vec(t.avg_pool(rev)) == t.value_vec(av));

  std::vector<Value> one{p1};
  CHECK(t.value_vec(t.max_pool(one)) == t.value_vec(p1));
  CHECK(t.value_vec(t.avg_pool(one)) == t.value_vec(p1));
}

TEST_CASE("subgroup assignment construction and validation") {
  auto a = SubgroupAssignment::by_order(8, 2);
  CHECK(a.subgroup_of == std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1});
  auto b = SubgroupAssignment::by_order(5, 2);  // remainder goes to earlier groups
  CHECK(b.subgroup_of == std::vector<int>{0, 0, 0, 1, 1});
  auto m = b.members();
  CHECK(m[0] == std::vector<int>{0, 1, 2});
  CHECK(m[1] == std::vector<int>{3, 4});

  SubgroupAssignment empty_group{{0, 0, 0}, 2};
  CHECK_THROWS_AS(empty_group.validate(), ShapeError);
  SubgroupAssignment out_of_range{{0, 2}, 2};
  CHECK_THROWS_AS(out_of_range.validate(), ShapeError);
  CHECK_THROWS_AS(SubgroupAssignment::by_order(1, 2), ShapeError);
}

TEST_CASE("gap on identical persons is uniform") {
  std::mt19937 rng(2);
  auto params = attn_from_flat(3, 2, rand_vec(rng, 3 * 2 + 3 + 3));
  auto person = rand_vec(rng, 2);
  Tape t;
  auto nodes = bind(t, params);
  std::vector<Value> ps;
  for (int i = 0; i < 4; ++i) ps.push_back(t.vec(person));
  auto r = gap(t, nodes, ps);
  for (double a : t.value(r.alpha)) CHECK(a == doctest::Approx(0.25).epsilon(1e-14));
  for (int k = 0; k < 2; ++k)
    CHECK(t.value(r.pooled)[k] == doctest::Approx(person[static_cast<std::size_t>(k)]).epsilon(1e-14));

  SUBCASE("single person gets weight one") {
    Tape t2;
    auto n2 = bind(t2, params);
    std::vector<Value> one{t2.vec(person)};
    auto r1 = gap(t2, n2, one);
    CHECK(t2.value(r1.alpha)[0] == 1.0);
    CHECK(t2.value_vec(r1.pooled) == t2.value_vec(one[0]));
  }

  SUBCASE("empty person set is rejected") {
    Tape t2;
    auto n2 = bind(t2, params);
    std::vector<Value> none;
    CHECK_THROWS_AS(gap(t2, n2, none), ShapeError);
  }
}

// Scalar walk of the attention equations: u_i = tanh(W p_i + b), scores
// u_i . u_ctx, alpha = softmax, G = sum alpha_i p_i. Constants recomputed
// below with plain std::tanh/std::exp as an in-test oracle.
TEST_CASE("gap matches the scalar oracle") {
  AttentionParams params(1, 1);
  params.w.at(0, 0) = 1.0;
  params.b[0] = 0.0;
  params.u_ctx[0] = 10.0;

  Tape t;
  auto nodes = bind(t, params);
  std::vector<Value> ps{t.vec(std::vector<double>{1.0}), t.vec(std::vector<double>{3.0})};
  auto r = gap(t, nodes, ps);

  const double s1 = 10.0 * std::tanh(1.0), s2 = 10.0 * std::tanh(3.0);
  CHECK(s1 == doctest::Approx(7.6159415595576485).epsilon(1e-14));
  CHECK(s2 == doctest::Approx(9.9505475368673046).epsilon(1e-14));
  const double e1 = std::exp(s1 - s2);
  const double a1 = e1 / (e1 + 1.0), a2 = 1.0 / (e1 + 1.0);
  const double g = a1 * 1.0 + a2 * 3.0;

  CHECK(std::abs(t.value(r.alpha)[0] - a1) < 1e-12);
  CHECK(std::abs(t.value(r.alpha)[1] - a2) < 1e-12);
  CHECK(std::abs(t.value(r.pooled)[0] - g) < 1e-12);
  // frozen values of the same oracle
  CHECK(t.value(r.alpha)[0] == doctest::Approx(0.08829717467721282).epsilon(1e-12));
  CHECK(t.value(r.alpha)[1] == doctest::Approx(0.91170282532278724).epsilon(1e-12));
  CHECK(t.value(r.pooled)[0] == doctest::Approx(2.8234056506455749).epsilon(1e-12));
}

TEST_CASE("hap with one subgroup and shared params reduces to gap") {
  std::mt19937 rng(8);
  auto pl = attn_from_flat(2, 3, rand_vec(rng, 2 * 3 + 2 + 2));
  std::vector<std::vector<double>> persons{rand_vec(rng, 3), rand_vec(rng, 3),
                                           rand_vec(rng, 3)};
  auto groups = SubgroupAssignment::by_order(3, 1);

  Tape t;
  auto nodes = bind(t, pl);
  std::vector<Value> ps;
  for (auto& p : persons) ps.push_back(t.vec(p));
  auto plain = gap(t, nodes, ps);
  std::vector<AttnNodes> levels{nodes};
  auto hier = hap(t, levels, nodes, ps, groups);

  // single subgroup: top-level attention sees one vector, weight 1
  CHECK(t.value(hier.subgroup_alpha)[0] == 1.0);
  for (int k = 0; k < 3; ++k)
    CHECK(t.value(hier.pooled)[k] ==
          doctest::Approx(t.value(plain.pooled)[k]).epsilon(1e-14));
  for (int i = 0; i < 3; ++i)
    CHECK(t.value(hier.person_alphas[0])[i] ==
          doctest::Approx(t.value(plain.alpha)[i]).epsilon(1e-14));
}

// Composes the scalar gap oracle twice: person level per subgroup, then the
// subgroup level over the two pooled scalars.
TEST_CASE("hap matches the two-stage scalar oracle") {
  auto p0 = attn_from_flat(1, 1, {1.0, 0.5, 2.0});
  auto p1 = attn_from_flat(1, 1, {-1.0, 0.0, 3.0});
  auto top = attn_from_flat(1, 1, {0.5, 0.0, 4.0});
  SubgroupAssignment groups{{0, 0, 1, 1}, 2};

  Tape t;
  std::vector<AttnNodes> levels{bind(t, p0), bind(t, p1)};
  auto tn = bind(t, top);
  std::vector<Value> ps{t.vec(std::vector<double>{1.0}), t.vec(std::vector<double>{2.0}),
                        t.vec(std::vector<double>{3.0}), t.vec(std::vector<double>{4.0})};
  auto r = hap(t, levels, tn, ps, groups);

  CHECK(t.value(r.person_alphas[0])[0] == doctest::Approx(0.45935685034305446).epsilon(1e-12));
  CHECK(t.value(r.person_alphas[0])[1] == doctest::Approx(0.5406431496569456).epsilon(1e-12));
  CHECK(t.value(r.person_alphas[1])[0] == doctest::Approx(0.5032058656068062).epsilon(1e-12));
  CHECK(t.value(r.person_alphas[1])[1] == doctest::Approx(0.49679413439319375).epsilon(1e-12));
  CHECK(t.value(r.subgroup_alpha)[0] == doctest::Approx(0.23571708894057034).epsilon(1e-12));
  CHECK(t.value(r.subgroup_alpha)[1] == doctest::Approx(0.7642829110594297).epsilon(1e-12));
  CHECK(t.value(r.pooled)[0] == doctest::Approx(3.0356959187429355).epsilon(1e-12));
}

TEST_CASE("hap on identical persons and identical params is symmetric") {
  std::mt19937 rng(13);
  auto shared = attn_from_flat(2, 2, rand_vec(rng, 2 * 2 + 2 + 2));
  auto person = rand_vec(rng, 2);
  SubgroupAssignment groups{{0, 0, 1, 1}, 2};

  Tape t;
  std::vector<AttnNodes> levels{bind(t, shared), bind(t, shared)};
  AttentionParams top_p = shared;
  auto tn = bind(t, top_p);
  std::vector<Value> ps;
  for (int i = 0; i < 4; ++i) ps.push_back(t.vec(person));
  auto r = hap(t, levels, tn, ps, groups);
  CHECK(t.value(r.subgroup_alpha)[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(t.value(r.subgroup_alpha)[1] == doctest::Approx(0.5).epsilon(1e-14));
  for (int k = 0; k < 2; ++k)
    CHECK(t.value(r.pooled)[k] == doctest::Approx(person[static_cast<std::size_t>(k)]).epsilon(1e-14));
}

TEST_CASE("subgroup gap concatenates per-subgroup vectors in id order") {
  std::mt19937 rng(21);
  auto pa = attn_from_flat(2, 4, rand_vec(rng, 2 * 4 + 2 + 2));
  auto pb = attn_from_flat(2, 4, rand_vec(rng, 2 * 4 + 2 + 2));
  std::vector<std::vector<double>> persons;
  for (int i = 0; i < 4; ++i) persons.push_back(rand_vec(rng, 4));
  SubgroupAssignment groups{{0, 0, 1, 1}, 2};

  Tape t;
  std::vector<AttnNodes> levels{bind(t, pa), bind(t, pb)};
  std::vector<Value> ps;
  for (auto& p : persons) ps.push_back(t.vec(p));
  auto r = subgroup_gap_concat(t, levels, ps, groups);
  CHECK(t.dim(r.pooled) == 8);

  // each half equals gap over that subgroup alone
  std::vector<Value> sub0{ps[0], ps[1]}, sub1{ps[2], ps[3]};
  auto g0 = gap(t, levels[0], sub0);
  auto g1 = gap(t, levels[1], sub1);
  for (int k = 0; k < 4; ++k) {
    CHECK(t.value(r.pooled)[k] == t.value(g0.pooled)[k]);
    CHECK(t.value(r.pooled)[4 + k] == t.value(g1.pooled)[k]);
  }

  SUBCASE("swapping subgroup ids swaps the halves") {
    SubgroupAssignment rev{{1, 1, 0, 0}, 2};
    std::vector<AttnNodes> rev_levels{levels[1], levels[0]};
    auto r2 = subgroup_gap_concat(t, rev_levels, ps, rev);
    bool any_diff = false;
    for (int k = 0; k < 4; ++k) {
      CHECK(t.value(r2.pooled)[k] == t.value(r.pooled)[4 + k]);
      CHECK(t.value(r2.pooled)[4 + k] == t.value(r.pooled)[k]);
      if (t.value(r2.pooled)[k] != t.value(r.pooled)[k]) any_diff = true;
    }
    CHECK(any_diff);  // the swap is observable: this scheme is id-sensitive
  }

  SUBCASE("m=1 reduces to gap") {
    auto one = SubgroupAssignment::by_order(4, 1);
    std::vector<AttnNodes> single{levels[0]};
    auto r1 = subgroup_gap_concat(t, single, ps, one);
    auto direct = gap(t, levels[0], ps);
    CHECK(t.dim(r1.pooled) == 4);
    for (int k = 0; k < 4; ++k)
      CHECK(t.value(r1.pooled)[k] == t.value(direct.pooled)[k]);
  }
}

TEST_CASE("person order weights flatten subgroup alphas") {
  SubgroupAssignment groups{{0, 1, 0, 1}, 2};
  Tape t;
  auto a0 = t.vec(std::vector<double>{0.25, 0.75});  // persons 0, 2
  auto a1 = t.vec(std::vector<double>{0.4, 0.6});    // persons 1, 3
  std::vector<Value> alphas{a0, a1};
  auto w = person_order_weights(t, alphas, groups);
  CHECK(w == std::vector<double>{0.25, 0.4, 0.75, 0.6});
}

TEST_CASE("attention gradients match finite differences") {
  std::mt19937 rng(55);
  constexpr double kTol = 1e-5;
  const int a = 2, d = 3, n = 4;
  const int block = a * d + a + a;
  std::vector<std::vector<double>> persons;
  for (int i = 0; i < n; ++i) persons.push_back(rand_vec(rng, d));
  auto probe = rand_vec(rng, d);
  SubgroupAssignment groups{{0, 0, 1, 1}, 2};

  SUBCASE("gap") {
    auto eval = [&](const std::vector<double>& flat) {
      auto params = attn_from_flat(a, d, flat);
      Tape t;
      auto nodes = bind(t, params);
      std::vector<Value> ps;
      for (auto& p : persons) ps.push_back(t.vec(p));
      auto r = gap(t, nodes, ps);
      return t.scalar(t.dot(r.pooled, t.vec(probe)));
    };
    auto flat = rand_vec(rng, block);
    auto params = attn_from_flat(a, d, flat);
    Tape t;
    auto nodes = bind(t, params);
    std::vector<Value> ps;
    for (auto& p : persons) ps.push_back(t.vec(p));
    auto r = gap(t, nodes, ps);
    t.backward(t.dot(r.pooled, t.vec(probe)));
    std::vector<double> analytic;
    for (double g : t.grad(nodes.w)) analytic.push_back(g);
    for (double g : t.grad(nodes.b)) analytic.push_back(g);
    for (double g : t.grad(nodes.u)) analytic.push_back(g);
    auto fd = testsupport::finite_diff_grad(eval, flat);
    CHECK(testsupport::max_rel_err(analytic, fd) < kTol);
  }

  SUBCASE("hap, including shared person-level params") {
    for (bool shared : {false, true}) {
      const int nblocks = shared ? 2 : 3;  // [shared-or-p0, p1?, top]
      auto eval = [&](const std::vector<double>& flat) {
        std::vector<AttentionParams> plevel;
        std::vector<double> b0(flat.begin(), flat.begin() + block);
        plevel.push_back(attn_from_flat(a, d, b0));
        if (!shared) {
          std::vector<double> b1(flat.begin() + block, flat.begin() + 2 * block);
          plevel.push_back(attn_from_flat(a, d, b1));
        }
        std::vector<double> btop(flat.end() - block, flat.end());
        auto top = attn_from_flat(a, d, btop);
        Tape t;
        std::vector<AttnNodes> pn;
        pn.push_back(bind(t, plevel[0]));
        pn.push_back(shared ? pn[0] : bind(t, plevel[1]));
        auto tn = bind(t, top);
        std::vector<Value> ps;
        for (auto& p : persons) ps.push_back(t.vec(p));
        auto r = hap(t, pn, tn, ps, groups);
        return t.scalar(t.dot(r.pooled, t.vec(probe)));
      };

      auto flat = rand_vec(rng, nblocks * block);
      std::vector<AttentionParams> plevel;
      plevel.push_back(attn_from_flat(a, d, {flat.begin(), flat.begin() + block}));
      if (!shared)
        plevel.push_back(attn_from_flat(a, d, {flat.begin() + block, flat.begin() + 2 * block}));
      auto top = attn_from_flat(a, d, {flat.end() - block, flat.end()});
      Tape t;
      std::vector<AttnNodes> pn;
      pn.push_back(bind(t, plevel[0]));
      pn.push_back(shared ? pn[0] : bind(t, plevel[1]));
      auto tn = bind(t, top);
      std::vector<Value> ps;
      for (auto& p : persons) ps.push_back(t.vec(p));
      auto r = hap(t, pn, tn, ps, groups);
      t.backward(t.dot(r.pooled, t.vec(probe)));
      std::vector<double> analytic;
      auto push_block = [&](const AttnNodes& nd) {
        for (double g : t.grad(nd.w)) analytic.push_back(g);
        for (double g : t.grad(nd.b)) analytic.push_back(g);
        for (double g : t.grad(nd.u)) analytic.push_back(g);
      };
      push_block(pn[0]);
      if (!shared) push_block(pn[1]);
      push_block(tn);
      auto fd = testsupport::finite_diff_grad(eval, flat);
      CHECK(testsupport::max_rel_err(analytic, fd) < kTol);
    }
  }

}

TEST_CASE("subgroup gap gradients match finite differences") {
  std::mt19937 rng(56);
  const int a = 2, d = 3;
  const int block = a * d + a + a;
  std::vector<std::vector<double>> persons;
  for (int i = 0; i < 4; ++i) persons.push_back(rand_vec(rng, d));
  auto probe = rand_vec(rng, 2 * d);
  SubgroupAssignment groups{{0, 0, 1, 1}, 2};

  auto eval = [&](const std::vector<double>& flat) {
    std::vector<AttentionParams> plevel{
        attn_from_flat(a, d, {flat.begin(), flat.begin() + block}),
        attn_from_flat(a, d, {flat.begin() + block, flat.end()})};
    Tape t;
    std::vector<AttnNodes> pn{bind(t, plevel[0]), bind(t, plevel[1])};
    std::vector<Value> ps;
    for (auto& p : persons) ps.push_back(t.vec(p));
    auto r = subgroup_gap_concat(t, pn, ps, groups);
    return t.scalar(t.dot(r.pooled, t.vec(probe)));
  };

  auto flat = rand_vec(rng, 2 * block);
  std::vector<AttentionParams> plevel{
      attn_from_flat(a, d, {flat.begin(), flat.begin() + block}),
      attn_from_flat(a, d, {flat.begin() + block, flat.end()})};
  Tape t;
  std::vector<AttnNodes> pn{bind(t, plevel[0]), bind(t, plevel[1])};
  std::vector<Value> ps;
  for (auto& p : persons) ps.push_back(t.vec(p));
  auto r = subgroup_gap_concat(t, pn, ps, groups);
  t.backward(t.dot(r.pooled, t.vec(probe)));
  std::vector<double> analytic;
  for (auto& nd : pn) {
    for (double g : t.grad(nd.w)) analytic.push_back(g);
    for (double g : t.grad(nd.b)) analytic.push_back(g);
    for (double g : t.grad(nd.u)) analytic.push_back(g);
  }
  auto fd = testsupport::finite_diff_grad(eval, flat);
  CHECK(testsupport::max_rel_err(analytic, fd) < 1e-5);
}

TEST_CASE("randomized attention invariants hold") {
  std::mt19937_64 rng(2026);
  for (int i = 0; i < 100; ++i)
    CHECK_NOTHROW(testsupport::check_attention_invariants_case(rng));
}
