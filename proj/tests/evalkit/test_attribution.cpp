#include <doctest.h>

#include "weedid/evalkit/reports.hpp"
#include "support/weed_tables.hpp"

using namespace weedid;
using namespace weedid::eval;

TEST_CASE("slender oat errors land on wild oat") {
  const auto t = weedid::testing::avena_case();
  auto recs = attribute_errors(t.confusion, t.classes, t.train_counts, 0.8);
  REQUIRE_FALSE(recs.empty());
  const auto& r = recs.front();
  CHECK(t.classes.taxa()[r.source].scientific_name == "Avena sterilis");
  CHECK(t.classes.taxa()[r.confounder].scientific_name == "Avena fatua");
  CHECK(r.count == 13);
  CHECK(r.same_genus);
  CHECK(r.same_family);
  CHECK(r.confounder_train_count == 5001);
}

TEST_CASE("willow dock errors land on curled dock") {
  const auto t = weedid::testing::rumex_case();
  auto recs = attribute_errors(t.confusion, t.classes, t.train_counts, 0.8);
  REQUIRE_FALSE(recs.empty());
  const auto& r = recs.front();
  CHECK(t.classes.taxa()[r.source].scientific_name == "Rumex longifolius");
  CHECK(t.classes.taxa()[r.confounder].scientific_name == "Rumex crispus");
  CHECK(r.count == 13);
  CHECK(r.same_genus);
  CHECK(r.confounder_train_count == 32739);
  CHECK(r.fraction_of_errors == doctest::Approx(13.0 / 19.0));
}
