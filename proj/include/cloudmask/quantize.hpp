// Stage 1: prior-knowledge colour-space discretisation.
//
// A RuleTable is an ordered list of categories, each guarded by a
// conjunction of interval tests; the first category whose tests all pass
// wins. Tables are plain text:
//
//   table <name>
//   domain rgb | L7 | S4 | AV4 | V4
//   category <name>
//   family vegetation | bare-soil/built-up | water-or-shadow | cloud |
//          snow-ice | smoke | achromatic/other
//   color <r> <g> <b>
//   when <term> <op> <value>      (zero or more; op is < <= > >=)
//   end
//
// Terms: a band role (B G R NIR MIR1 MIR2 TIR CIRRUS), nd(X,Y) = (X-Y)/(X+Y),
// ndvi = nd(NIR,R), ndsi = nd(G,MIR1), and the aggregates mean, min, max,
// flat = (max-min)/mean over the domain's reflective bands. The rgb domain
// adds chroma = max-min and hue in degrees [0, 360).
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cloudmask/calibrate.hpp"
#include "cloudmask/raster.hpp"

namespace cloudmask {

using CategoryId = std::uint16_t;
inline constexpr CategoryId kNoCategory = std::numeric_limits<CategoryId>::max();

enum class Family : std::uint8_t {
  Vegetation,
  BareSoilBuiltUp,
  WaterOrShadow,
  Cloud,
  SnowIce,
  Smoke,
  AchromaticOther
};

inline constexpr std::array<std::string_view, 7> kFamilyNames = {
    "vegetation", "bare-soil/built-up", "water-or-shadow", "cloud",
    "snow-ice",   "smoke",              "achromatic/other"};

inline constexpr std::string_view family_name(Family f) {
  return kFamilyNames[static_cast<std::size_t>(f)];
}

inline std::optional<Family> parse_family(std::string_view s) {
  for (std::size_t i = 0; i < kFamilyNames.size(); ++i)
    if (kFamilyNames[i] == s) return static_cast<Family>(i);
  return std::nullopt;
}

struct Category {
  CategoryId id = 0;
  std::string name;
  Family family = Family::AchromaticOther;
  std::array<std::uint8_t, 3> color{};
};

class CategoryVocabulary {
 public:
  CategoryVocabulary() = default;
  explicit CategoryVocabulary(std::string name) : name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }
  std::size_t size() const noexcept { return cats_.size(); }
  const std::vector<Category>& categories() const noexcept { return cats_; }
  const Category& operator[](CategoryId id) const { return cats_.at(id); }

  CategoryId add(std::string name, Family family, std::array<std::uint8_t, 3> color) {
    if (find(name)) throw config_error("duplicate category name '" + name + "'");
    if (cats_.size() >= kNoCategory) throw config_error("vocabulary too large");
    const auto id = static_cast<CategoryId>(cats_.size());
    cats_.push_back(Category{id, std::move(name), family, color});
    return id;
  }

  std::optional<CategoryId> find(std::string_view name) const {
    for (const Category& c : cats_)
      if (c.name == name) return c.id;
    return std::nullopt;
  }
  CategoryId id(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw config_error("vocabulary '" + name_ + "' has no category '" + std::string(name) + "'");
  }
  Family family(CategoryId id) const { return cats_.at(id).family; }

 private:
  std::string name_;
  std::vector<Category> cats_;
};

// ---------------------------------------------------------------------------
// Subsystems

enum class SiamSubsystem : std::uint8_t { L7, S4, AV4, V4 };

inline constexpr std::array<SiamSubsystem, 4> kSubsystemPreference = {
    SiamSubsystem::L7, SiamSubsystem::S4, SiamSubsystem::AV4, SiamSubsystem::V4};

inline constexpr std::string_view subsystem_name(SiamSubsystem s) {
  constexpr std::array<std::string_view, 4> n = {"L7", "S4", "AV4", "V4"};
  return n[static_cast<std::size_t>(s)];
}

inline std::optional<SiamSubsystem> parse_subsystem(std::string_view s) {
  for (SiamSubsystem x : kSubsystemPreference)
    if (subsystem_name(x) == s) return x;
  return std::nullopt;
}

inline std::vector<BandRole> subsystem_roles(SiamSubsystem s) {
  using enum BandRole;
  switch (s) {
    case SiamSubsystem::L7: return {B, G, R, NIR, MIR1, MIR2, TIR};
    case SiamSubsystem::S4: return {G, R, NIR, MIR1};
    case SiamSubsystem::AV4: return {R, NIR, MIR1, TIR};
    case SiamSubsystem::V4: return {B, G, R, NIR};
  }
  return {};
}

inline RoleSet subsystem_role_set(SiamSubsystem s) {
  RoleSet rs;
  for (BandRole r : subsystem_roles(s)) rs.insert(r);
  return rs;
}

/// Most informative subsystem whose roles are all available.
inline SiamSubsystem select_subsystem(RoleSet available) {
  if (available.empty()) throw config_error("no bands available");
  for (SiamSubsystem s : kSubsystemPreference)
    if (available.contains_all(subsystem_role_set(s))) return s;
  throw config_error("no spectral subsystem is satisfiable by the available bands");
}

// ---------------------------------------------------------------------------
// Rule tables

/// Input domain a table is declared over.
struct RuleDomain {
  bool rgb = false;
  SiamSubsystem subsystem = SiamSubsystem::L7;

  std::vector<BandRole> roles() const {
    if (rgb) return {BandRole::R, BandRole::G, BandRole::B};
    return subsystem_roles(subsystem);
  }
  std::string name() const { return rgb ? "rgb" : std::string(subsystem_name(subsystem)); }
  friend bool operator==(const RuleDomain&, const RuleDomain&) = default;
};

enum class TermKind : std::uint8_t { Role, NormDiff, Mean, Min, Max, Flat, Chroma, Hue };
enum class CompareOp : std::uint8_t { Lt, Le, Gt, Ge };

struct Term {
  TermKind kind = TermKind::Role;
  BandRole a = BandRole::B;
  BandRole b = BandRole::B;
};

struct Condition {
  Term term;
  CompareOp op = CompareOp::Lt;
  double value = 0.0;
  std::string text;
};

/// Per-pixel band values plus the aggregates the rule terms read.
struct PixelFeatures {
  std::array<double, 8> v{};
  double mean = 0, min = 0, max = 0, flat = 0, chroma = 0, hue = 0;

  double role(BandRole r) const { return v[static_cast<std::size_t>(r)]; }
};

namespace detail {

inline double norm_diff(double x, double y) {
  const double s = x + y;
  return s == 0.0 ? 0.0 : (x - y) / s;
}

inline double rgb_hue(double r, double g, double b) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double c = mx - mn;
  if (c <= 0.0) return 0.0;
  double h;
  if (mx == r) h = std::fmod((g - b) / c, 6.0);
  else if (mx == g) h = (b - r) / c + 2.0;
  else h = (r - g) / c + 4.0;
  h *= 60.0;
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  return h;
}

}  // namespace detail

class RuleTable {
 public:
  RuleTable() = default;

  const std::string& name() const noexcept { return name_; }
  const RuleDomain& domain() const noexcept { return domain_; }
  const CategoryVocabulary& vocabulary() const { return *vocab_; }
  std::shared_ptr<const CategoryVocabulary> vocabulary_ptr() const { return vocab_; }
  const std::vector<std::vector<Condition>>& rules() const noexcept { return rules_; }

  /// Parses the text format above. Rejects terms that read bands outside
  /// the declared domain.
  static RuleTable parse(std::string_view text) {
    RuleTable t;
    auto vocab = std::make_shared<CategoryVocabulary>();
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    bool in_block = false, have_domain = false, have_family = false;
    std::string cat_name;
    Family fam = Family::AchromaticOther;
    std::array<std::uint8_t, 3> color{128, 128, 128};
    std::vector<Condition> conds;
    auto fail = [&](const std::string& msg) {
      throw config_error("rule table line " + std::to_string(lineno) + ": " + msg);
    };

    while (std::getline(in, line)) {
      ++lineno;
      const std::string s = detail::trim(line);
      if (s.empty() || s.front() == '#') continue;
      const auto sp = s.find_first_of(" \t");
      const std::string key = s.substr(0, sp);
      const std::string rest = sp == std::string::npos ? "" : detail::trim(s.substr(sp));
      if (key == "table") {
        t.name_ = rest;
      } else if (key == "domain") {
        if (rest == "rgb") t.domain_.rgb = true;
        else if (auto sub = parse_subsystem(rest)) t.domain_ = RuleDomain{false, *sub};
        else fail("unknown domain '" + rest + "'");
        have_domain = true;
      } else if (key == "category") {
        if (in_block) fail("category block not closed with 'end'");
        if (!have_domain) fail("domain must precede categories");
        if (rest.empty()) fail("category needs a name");
        in_block = true;
        have_family = false;
        cat_name = rest;
        color = {128, 128, 128};
        conds.clear();
      } else if (key == "family") {
        if (!in_block) fail("family outside a category block");
        auto f = parse_family(rest);
        if (!f) fail("unknown family '" + rest + "'");
        fam = *f;
        have_family = true;
      } else if (key == "color") {
        if (!in_block) fail("color outside a category block");
        std::istringstream cs(rest);
        int r = -1, g = -1, b = -1;
        cs >> r >> g >> b;
        if (!cs || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
          fail("color needs three values in 0..255");
        color = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                 static_cast<std::uint8_t>(b)};
      } else if (key == "when") {
        if (!in_block) fail("when outside a category block");
        conds.push_back(t.parse_condition(rest, fail));
      } else if (key == "end") {
        if (!in_block) fail("end without category");
        if (!have_family) fail("category '" + cat_name + "' has no family");
        try {
          vocab->add(cat_name, fam, color);
        } catch (const config_error& e) {
          fail(e.what());
        }
        t.rules_.push_back(conds);
        in_block = false;
      } else {
        fail("unknown keyword '" + key + "'");
      }
    }
    if (in_block) throw config_error("rule table ends inside a category block");
    if (!have_domain) throw config_error("rule table declares no domain");
    if (vocab->size() == 0) throw config_error("rule table has no categories");
    t.vocab_ = rename(std::move(vocab), t.name_.empty() ? t.domain_.name() : t.name_);
    t.aggregate_roles_.clear();
    for (BandRole r : t.domain_.roles())
      if (r != BandRole::TIR && r != BandRole::CIRRUS) t.aggregate_roles_.push_back(r);
    return t;
  }

  /// Serialises back into the text format.
  std::string to_text() const {
    std::ostringstream os;
    os << "table " << name_ << "\n"
       << "domain " << domain_.name() << "\n";
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      const Category& c = (*vocab_)[static_cast<CategoryId>(i)];
      os << "\ncategory " << c.name << "\n"
         << "family " << family_name(c.family) << "\n"
         << "color " << int(c.color[0]) << " " << int(c.color[1]) << " " << int(c.color[2])
         << "\n";
      for (const Condition& cond : rules_[i]) os << "when " << cond.text << "\n";
      os << "end\n";
    }
    return os.str();
  }

  /// Fills the aggregate fields of `px` from its band values.
  void compute_features(PixelFeatures& px) const {
    double sum = 0.0, mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (BandRole r : aggregate_roles_) {
      const double x = px.role(r);
      sum += x;
      mn = std::min(mn, x);
      mx = std::max(mx, x);
    }
    const double n = static_cast<double>(aggregate_roles_.size());
    px.mean = n > 0 ? sum / n : 0.0;
    px.min = n > 0 ? mn : 0.0;
    px.max = n > 0 ? mx : 0.0;
    px.flat = px.mean > 0.0 ? (px.max - px.min) / px.mean : 0.0;
    px.chroma = px.max - px.min;
    px.hue = domain_.rgb ? detail::rgb_hue(px.role(BandRole::R), px.role(BandRole::G),
                                           px.role(BandRole::B))
                         : 0.0;
  }

  /// First matching category, or kNoCategory if the table has a hole here.
  CategoryId classify(const PixelFeatures& px) const {
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      bool ok = true;
      for (const Condition& c : rules_[i])
        if (!holds(c, px)) {
          ok = false;
          break;
        }
      if (ok) return static_cast<CategoryId>(i);
    }
    return kNoCategory;
  }

  static double term_value(const Term& t, const PixelFeatures& px) {
    switch (t.kind) {
      case TermKind::Role: return px.role(t.a);
      case TermKind::NormDiff: return detail::norm_diff(px.role(t.a), px.role(t.b));
      case TermKind::Mean: return px.mean;
      case TermKind::Min: return px.min;
      case TermKind::Max: return px.max;
      case TermKind::Flat: return px.flat;
      case TermKind::Chroma: return px.chroma;
      case TermKind::Hue: return px.hue;
    }
    return 0.0;
  }

  static bool holds(const Condition& c, const PixelFeatures& px) {
    const double x = term_value(c.term, px);
    switch (c.op) {
      case CompareOp::Lt: return x < c.value;
      case CompareOp::Le: return x <= c.value;
      case CompareOp::Gt: return x > c.value;
      case CompareOp::Ge: return x >= c.value;
    }
    return false;
  }

 private:
  static std::shared_ptr<const CategoryVocabulary> rename(std::shared_ptr<CategoryVocabulary> v,
                                                          const std::string& name) {
    auto out = std::make_shared<CategoryVocabulary>(name);
    for (const Category& c : v->categories()) out->add(c.name, c.family, c.color);
    return out;
  }

  template <typename Fail>
  Condition parse_condition(const std::string& text, Fail&& fail) const {
    std::istringstream ss(text);
    std::string term, op;
    double value = 0.0;
    ss >> term >> op;
    std::string num;
    ss >> num;
    std::string extra;
    if (term.empty() || op.empty() || num.empty() || (ss >> extra)) fail("expected '<term> <op> <value>'");
    try {
      value = detail::parse_double(num, term);
    } catch (const io_error& e) {
      fail(e.what());
    }
    Condition c;
    c.value = value;
    c.text = term + " " + op + " " + num;
    if (op == "<") c.op = CompareOp::Lt;
    else if (op == "<=") c.op = CompareOp::Le;
    else if (op == ">") c.op = CompareOp::Gt;
    else if (op == ">=") c.op = CompareOp::Ge;
    else fail("unknown operator '" + op + "'");

    RoleSet avail;
    for (BandRole r : domain_.roles()) avail.insert(r);
    auto need = [&](BandRole r) {
      if (!avail.contains(r))
        fail("term '" + term + "' reads band " + std::string(role_name(r)) +
             " which domain " + domain_.name() + " lacks");
    };
    auto role_or_fail = [&](std::string_view s) {
      auto r = parse_role(s);
      if (!r) fail("unknown band role '" + std::string(s) + "'");
      need(*r);
      return *r;
    };

    if (term == "mean") c.term.kind = TermKind::Mean;
    else if (term == "min") c.term.kind = TermKind::Min;
    else if (term == "max") c.term.kind = TermKind::Max;
    else if (term == "flat") c.term.kind = TermKind::Flat;
    else if (term == "chroma" || term == "hue") {
      if (!domain_.rgb) fail("term '" + term + "' is only defined for the rgb domain");
      c.term.kind = term == "chroma" ? TermKind::Chroma : TermKind::Hue;
    } else if (term == "ndvi") {
      c.term = Term{TermKind::NormDiff, role_or_fail("NIR"), role_or_fail("R")};
    } else if (term == "ndsi") {
      c.term = Term{TermKind::NormDiff, role_or_fail("G"), role_or_fail("MIR1")};
    } else if (term.rfind("nd(", 0) == 0 && term.back() == ')') {
      const std::string inner = term.substr(3, term.size() - 4);
      const auto comma = inner.find(',');
      if (comma == std::string::npos) fail("nd() needs two roles");
      c.term = Term{TermKind::NormDiff, role_or_fail(inner.substr(0, comma)),
                    role_or_fail(inner.substr(comma + 1))};
    } else {
      c.term = Term{TermKind::Role, role_or_fail(term), BandRole::B};
    }
    return c;
  }

  std::string name_;
  RuleDomain domain_;
  std::shared_ptr<const CategoryVocabulary> vocab_;
  std::vector<std::vector<Condition>> rules_;
  std::vector<BandRole> aggregate_roles_;
};

// ---------------------------------------------------------------------------
// Shipped tables

namespace tables {

/// 26 colour names: white/black, three greys, three desaturated tones, and
/// six hue sectors in each brightness tercile.
inline constexpr std::string_view kRgbDefault = R"(table rgbiam-26
domain rgb

category white
family cloud
color 255 255 255
when min >= 204
when chroma <= 25
end

category black
family achromatic/other
color 0 0 0
when max <= 51
when chroma <= 25
end

category dark gray
family achromatic/other
color 64 64 64
when chroma <= 25
when mean < 85
end

category mid gray
family achromatic/other
color 128 128 128
when chroma <= 25
when mean < 170
end

category light gray
family achromatic/other
color 200 200 200
when chroma <= 25
end

category dark desaturated
family achromatic/other
color 80 72 64
when chroma <= 60
when mean < 85
end

category mid desaturated
family bare-soil/built-up
color 150 140 125
when chroma <= 60
when mean < 170
end

category light desaturated
family bare-soil/built-up
color 215 205 190
when chroma <= 60
end

category dark yellow
family bare-soil/built-up
color 110 90 30
when mean < 85
when hue >= 30
when hue < 90
end

category dark green
family vegetation
color 20 80 20
when mean < 85
when hue >= 90
when hue < 150
end

category dark cyan
family water-or-shadow
color 10 70 80
when mean < 85
when hue >= 150
when hue < 210
end

category dark blue
family water-or-shadow
color 10 20 90
when mean < 85
when hue >= 210
when hue < 270
end

category dark magenta
family achromatic/other
color 80 20 80
when mean < 85
when hue >= 270
when hue < 330
end

category dark red
family bare-soil/built-up
color 100 30 20
when mean < 85
end

category mid yellow
family bare-soil/built-up
color 190 160 60
when mean < 170
when hue >= 30
when hue < 90
end

category mid green
family vegetation
color 60 150 50
when mean < 170
when hue >= 90
when hue < 150
end

category mid cyan
family water-or-shadow
color 40 150 160
when mean < 170
when hue >= 150
when hue < 210
end

category mid blue
family water-or-shadow
color 40 70 170
when mean < 170
when hue >= 210
when hue < 270
end

category mid magenta
family achromatic/other
color 160 60 160
when mean < 170
when hue >= 270
when hue < 330
end

category mid red
family bare-soil/built-up
color 170 70 50
when mean < 170
end

category light yellow
family bare-soil/built-up
color 240 220 130
when hue >= 30
when hue < 90
end

category light green
family vegetation
color 150 220 130
when hue >= 90
when hue < 150
end

category light cyan
family water-or-shadow
color 150 230 235
when hue >= 150
when hue < 210
end

category light blue
family water-or-shadow
color 150 170 240
when hue >= 210
when hue < 270
end

category light magenta
family achromatic/other
color 230 150 230
when hue >= 270
when hue < 330
end

category light red
family bare-soil/built-up
color 240 150 130
end
)";

inline constexpr std::string_view kSiamL7 = R"(table siam-L7
domain L7

category snow water-ice
family snow-ice
color 0 255 255
when ndsi >= 0.4
when G >= 0.25
when ndvi < 0.2
end

category core cloud
family cloud
color 255 255 255
when min >= 0.35
when flat <= 0.6
end

category thick cloud
family cloud
color 235 235 235
when mean >= 0.3
when B >= 0.2
when flat <= 0.8
end

category thin cloud over vegetation
family cloud
color 205 225 205
when mean >= 0.15
when B >= 0.15
when ndvi >= 0.1
when nd(MIR1,B) < 0.25
end

category thin cloud over water
family cloud
color 205 215 240
when mean >= 0.12
when B >= 0.15
when ndvi < 0.1
when nd(MIR1,B) < 0.1
end

category thick smoke plume over water
family smoke
color 90 90 110
when ndvi < 0
when NIR < 0.08
when B >= 0.11
when nd(B,MIR1) >= 0.5
end

category thin smoke plume over water
family smoke
color 120 120 150
when ndvi < 0
when NIR < 0.08
when B >= 0.08
when nd(B,MIR1) >= 0.5
end

category smoke plume over vegetation
family smoke
color 110 130 110
when ndvi >= 0.2
when ndvi < 0.5
when B >= 0.08
when nd(B,R) >= 0.1
end

category smoke plume over bare soil or built-up
family smoke
color 140 120 110
when ndvi >= 0
when ndvi < 0.2
when B >= 0.1
when nd(MIR1,B) < 0.2
when mean < 0.2
end

category strong vegetation
family vegetation
color 0 120 0
when ndvi >= 0.6
when NIR >= 0.2
end

category vegetation in shadow
family vegetation
color 0 70 40
when ndvi >= 0.4
when NIR < 0.15
end

category average vegetation
family vegetation
color 60 160 60
when ndvi >= 0.4
end

category vegetation in water or shadow
family water-or-shadow
color 30 80 70
when ndvi >= 0.1
when max < 0.1
end

category weak vegetation or rangeland
family vegetation
color 150 190 90
when ndvi >= 0.2
end

category deep water
family water-or-shadow
color 0 0 140
when ndvi < -0.1
when NIR < 0.05
when B >= 0.04
end

category turbid water
family water-or-shadow
color 40 90 200
when ndvi < 0
when NIR < 0.08
when B >= 0.04
end

category water or shadow
family water-or-shadow
color 20 20 60
when max < 0.1
end

category bright bare soil or built-up
family bare-soil/built-up
color 230 200 160
when mean >= 0.25
end

category average bare soil or built-up
family bare-soil/built-up
color 190 150 110
when mean >= 0.12
end

category dark bare soil or built-up
family bare-soil/built-up
color 120 90 60
when mean >= 0.06
end

category unknown
family achromatic/other
color 255 0 255
end
)";

inline constexpr std::string_view kSiamS4 = R"(table siam-S4
domain S4

category snow water-ice
family snow-ice
color 0 255 255
when ndsi >= 0.4
when G >= 0.25
when ndvi < 0.2
end

category core cloud
family cloud
color 255 255 255
when min >= 0.35
when flat <= 0.6
end

category thick cloud
family cloud
color 235 235 235
when mean >= 0.3
when G >= 0.2
when flat <= 0.8
end

category thin cloud over vegetation
family cloud
color 205 225 205
when mean >= 0.15
when G >= 0.15
when ndvi >= 0.1
when nd(MIR1,G) < 0.2
end

category thin cloud over water
family cloud
color 205 215 240
when mean >= 0.12
when G >= 0.15
when ndvi < 0.1
when nd(MIR1,G) < 0.1
end

category thick smoke plume over water
family smoke
color 90 90 110
when ndvi < 0
when NIR < 0.08
when G >= 0.1
when nd(G,MIR1) >= 0.5
end

category thin smoke plume over water
family smoke
color 120 120 150
when ndvi < 0
when NIR < 0.08
when G >= 0.07
when nd(G,MIR1) >= 0.5
end

category smoke plume over vegetation
family smoke
color 110 130 110
when ndvi >= 0.2
when ndvi < 0.5
when G >= 0.09
when nd(G,R) >= 0.1
end

category smoke plume over bare soil or built-up
family smoke
color 140 120 110
when ndvi >= 0
when ndvi < 0.2
when G >= 0.12
when nd(MIR1,G) < 0.15
when mean < 0.2
end

category strong vegetation
family vegetation
color 0 120 0
when ndvi >= 0.6
when NIR >= 0.2
end

category vegetation in shadow
family vegetation
color 0 70 40
when ndvi >= 0.4
when NIR < 0.15
end

category average vegetation
family vegetation
color 60 160 60
when ndvi >= 0.4
end

category vegetation in water or shadow
family water-or-shadow
color 30 80 70
when ndvi >= 0.1
when max < 0.1
end

category weak vegetation or rangeland
family vegetation
color 150 190 90
when ndvi >= 0.2
end

category deep water
family water-or-shadow
color 0 0 140
when ndvi < -0.1
when NIR < 0.05
when G >= 0.03
end

category turbid water
family water-or-shadow
color 40 90 200
when ndvi < 0
when NIR < 0.08
when G >= 0.03
end

category water or shadow
family water-or-shadow
color 20 20 60
when max < 0.1
end

category bright bare soil or built-up
family bare-soil/built-up
color 230 200 160
when mean >= 0.25
end

category average bare soil or built-up
family bare-soil/built-up
color 190 150 110
when mean >= 0.12
end

category dark bare soil or built-up
family bare-soil/built-up
color 120 90 60
when mean >= 0.06
end

category unknown
family achromatic/other
color 255 0 255
end
)";

inline constexpr std::string_view kSiamAV4 = R"(table siam-AV4
domain AV4

category snow water-ice
family snow-ice
color 0 255 255
when nd(R,MIR1) >= 0.4
when R >= 0.25
when ndvi < 0.2
end

category core cloud
family cloud
color 255 255 255
when min >= 0.35
when flat <= 0.6
end

category thick cloud
family cloud
color 235 235 235
when mean >= 0.3
when R >= 0.2
when flat <= 0.8
end

category thin cloud over vegetation
family cloud
color 205 225 205
when mean >= 0.15
when R >= 0.15
when ndvi >= 0.1
when nd(MIR1,R) < 0.2
end

category thin cloud over water
family cloud
color 205 215 240
when mean >= 0.12
when R >= 0.15
when ndvi < 0.1
when nd(MIR1,R) < 0.1
end

category thick smoke plume over water
family smoke
color 90 90 110
when ndvi < 0
when NIR < 0.08
when R >= 0.09
when nd(R,MIR1) >= 0.5
end

category thin smoke plume over water
family smoke
color 120 120 150
when ndvi < 0
when NIR < 0.08
when R >= 0.06
when nd(R,MIR1) >= 0.5
end

category smoke plume over vegetation
family smoke
color 110 130 110
when ndvi >= 0.2
when ndvi < 0.5
when R >= 0.08
when nd(MIR1,R) < 0.3
end

category smoke plume over bare soil or built-up
family smoke
color 140 120 110
when ndvi >= 0
when ndvi < 0.2
when R >= 0.12
when nd(MIR1,R) < 0.1
when mean < 0.2
end

category strong vegetation
family vegetation
color 0 120 0
when ndvi >= 0.6
when NIR >= 0.2
end

category vegetation in shadow
family vegetation
color 0 70 40
when ndvi >= 0.4
when NIR < 0.15
end

category average vegetation
family vegetation
color 60 160 60
when ndvi >= 0.4
end

category vegetation in water or shadow
family water-or-shadow
color 30 80 70
when ndvi >= 0.1
when max < 0.1
end

category weak vegetation or rangeland
family vegetation
color 150 190 90
when ndvi >= 0.2
end

category deep water
family water-or-shadow
color 0 0 140
when ndvi < -0.1
when NIR < 0.05
when R >= 0.02
end

category turbid water
family water-or-shadow
color 40 90 200
when ndvi < 0
when NIR < 0.08
when R >= 0.02
end

category water or shadow
family water-or-shadow
color 20 20 60
when max < 0.1
end

category bright bare soil or built-up
family bare-soil/built-up
color 230 200 160
when mean >= 0.25
end

category average bare soil or built-up
family bare-soil/built-up
color 190 150 110
when mean >= 0.12
end

category dark bare soil or built-up
family bare-soil/built-up
color 120 90 60
when mean >= 0.06
end

category unknown
family achromatic/other
color 255 0 255
end
)";

inline constexpr std::string_view kSiamV4 = R"(table siam-V4
domain V4

category snow water-ice
family snow-ice
color 0 255 255
when mean >= 0.6
when nd(B,NIR) >= 0.1
when ndvi < 0.2
end

category core cloud
family cloud
color 255 255 255
when min >= 0.35
when flat <= 0.6
end

category thick cloud
family cloud
color 235 235 235
when mean >= 0.3
when B >= 0.2
when flat <= 0.8
end

category thin cloud over vegetation
family cloud
color 205 225 205
when mean >= 0.15
when B >= 0.15
when ndvi >= 0.1
when nd(NIR,B) < 0.35
end

category thin cloud over water
family cloud
color 205 215 240
when mean >= 0.12
when B >= 0.15
when ndvi < 0.1
when nd(NIR,B) < 0.1
end

category thick smoke plume over water
family smoke
color 90 90 110
when ndvi < 0
when NIR < 0.08
when B >= 0.11
when nd(B,NIR) >= 0.3
end

category thin smoke plume over water
family smoke
color 120 120 150
when ndvi < 0
when NIR < 0.08
when B >= 0.08
when nd(B,NIR) >= 0.3
end

category smoke plume over vegetation
family smoke
color 110 130 110
when ndvi >= 0.2
when ndvi < 0.5
when B >= 0.08
when nd(B,R) >= 0.1
end

category smoke plume over bare soil or built-up
family smoke
color 140 120 110
when ndvi >= 0
when ndvi < 0.2
when B >= 0.1
when nd(NIR,B) < 0.2
when mean < 0.2
end

category strong vegetation
family vegetation
color 0 120 0
when ndvi >= 0.6
when NIR >= 0.2
end

category vegetation in shadow
family vegetation
color 0 70 40
when ndvi >= 0.4
when NIR < 0.15
end

category average vegetation
family vegetation
color 60 160 60
when ndvi >= 0.4
end

category vegetation in water or shadow
family water-or-shadow
color 30 80 70
when ndvi >= 0.1
when max < 0.1
end

category weak vegetation or rangeland
family vegetation
color 150 190 90
when ndvi >= 0.2
end

category deep water
family water-or-shadow
color 0 0 140
when ndvi < -0.1
when NIR < 0.05
when B >= 0.04
end

category turbid water
family water-or-shadow
color 40 90 200
when ndvi < 0
when NIR < 0.08
when B >= 0.04
end

category water or shadow
family water-or-shadow
color 20 20 60
when max < 0.1
end

category bright bare soil or built-up
family bare-soil/built-up
color 230 200 160
when mean >= 0.25
end

category average bare soil or built-up
family bare-soil/built-up
color 190 150 110
when mean >= 0.12
end

category dark bare soil or built-up
family bare-soil/built-up
color 120 90 60
when mean >= 0.06
end

category unknown
family achromatic/other
color 255 0 255
end
)";

}  // namespace tables

inline const RuleTable& default_rgb_table() {
  static const RuleTable t = RuleTable::parse(tables::kRgbDefault);
  return t;
}

inline const RuleTable& default_siam_table(SiamSubsystem s) {
  static const std::array<RuleTable, 4> t = {
      RuleTable::parse(tables::kSiamL7), RuleTable::parse(tables::kSiamS4),
      RuleTable::parse(tables::kSiamAV4), RuleTable::parse(tables::kSiamV4)};
  return t[static_cast<std::size_t>(s)];
}

// ---------------------------------------------------------------------------
// Category maps

struct ColorNameMap {
  Plane<CategoryId> ids;
  std::shared_ptr<const CategoryVocabulary> vocabulary;
  std::string subsystem;

  std::size_t width() const { return ids.width(); }
  std::size_t height() const { return ids.height(); }
  const CategoryVocabulary& vocab() const { return *vocabulary; }
};

/// Admissible input ranges used by the quantisers and grid validation.
struct DomainRange {
  double lo, hi;
};
inline DomainRange role_range(BandRole r, bool rgb) {
  if (rgb) return {0.0, 255.0};
  if (r == BandRole::TIR) return {150.0, 350.0};
  return {0.0, static_cast<double>(kMaxToarf)};
}

namespace detail {

inline ColorNameMap quantize_image(const MultiSpectralImage& img, const RuleTable& table,
                                   unsigned threads) {
  const auto roles = table.domain().roles();
  std::vector<const Plane<float>*> planes;
  for (BandRole r : roles) planes.push_back(&img.band(r).values);

  ColorNameMap out;
  out.ids = Plane<CategoryId>(img.width(), img.height(), kNoCategory);
  out.vocabulary = table.vocabulary_ptr();
  out.subsystem = table.domain().name();
  const bool rgb = table.domain().rgb;
  const auto ts = tiles(img, 256);
  std::atomic<bool> hole{false};
  for_each_tile(ts, threads, [&](const Tile& t) {
    PixelFeatures px;
    for (std::size_t r = t.row; r < t.row_end(); ++r)
      for (std::size_t c = t.col; c < t.col_end(); ++c) {
        for (std::size_t k = 0; k < roles.size(); ++k) {
          const DomainRange dr = role_range(roles[k], rgb);
          double v = (*planes[k])(r, c);
          if (!std::isfinite(v)) v = dr.lo;
          px.v[static_cast<std::size_t>(roles[k])] = std::clamp(v, dr.lo, dr.hi);
        }
        table.compute_features(px);
        const CategoryId id = table.classify(px);
        if (id == kNoCategory) hole = true;
        out.ids(r, c) = id;
      }
  });
  if (hole) throw config_error("rule table '" + table.name() + "' is not total over this image");
  return out;
}

}  // namespace detail

/// Byte RGB (after the colour-constancy stretch) onto the RGB vocabulary.
inline ColorNameMap quantize_rgb(const MultiSpectralImage& img, const RuleTable& table,
                                 unsigned threads = 1) {
  if (!table.domain().rgb) throw config_error("quantize_rgb needs an rgb-domain table");
  return detail::quantize_image(img, table, threads);
}

/// Calibrated multispectral image onto a subsystem vocabulary.
inline ColorNameMap quantize_ms(const MultiSpectralImage& img, SiamSubsystem subsystem,
                                const RuleTable& table, unsigned threads = 1) {
  if (img.units() != Units::TOARF) throw config_error("quantize_ms needs a TOARF image");
  if (table.domain().rgb || table.domain().subsystem != subsystem)
    throw config_error("rule table '" + table.name() + "' is not declared for subsystem " +
                       std::string(subsystem_name(subsystem)));
  if (!img.roles().contains_all(subsystem_role_set(subsystem)))
    throw config_error("image lacks bands required by subsystem " +
                       std::string(subsystem_name(subsystem)));
  return detail::quantize_image(img, table, threads);
}

inline Plane<std::uint8_t> family_map(const ColorNameMap& m) {
  Plane<std::uint8_t> out(m.width(), m.height());
  for (std::size_t i = 0; i < m.ids.size(); ++i)
    out[i] = static_cast<std::uint8_t>(m.vocab().family(m.ids[i]));
  return out;
}

inline RgbPixmap pseudocolor(const ColorNameMap& m) {
  RgbPixmap pm{m.width(), m.height(), {}};
  pm.pixels.reserve(m.ids.size());
  for (CategoryId id : m.ids.data()) pm.pixels.push_back(m.vocab()[id].color);
  return pm;
}

inline LabelRaster to_label_raster(const ColorNameMap& m) {
  LabelRaster lr{LabelKind::Categories, m.vocab().name(), Plane<std::uint32_t>(m.width(), m.height())};
  for (std::size_t i = 0; i < m.ids.size(); ++i) lr.labels[i] = m.ids[i];
  return lr;
}

inline ColorNameMap from_label_raster(const LabelRaster& lr, const RuleTable& table) {
  if (lr.kind != LabelKind::Categories) throw io_error("label raster is not a category map");
  if (lr.tag != table.vocabulary().name())
    throw io_error("category map vocabulary '" + lr.tag + "' does not match table '" +
                   table.vocabulary().name() + "'");
  ColorNameMap m;
  m.ids = Plane<CategoryId>(lr.labels.width(), lr.labels.height());
  m.vocabulary = table.vocabulary_ptr();
  m.subsystem = table.domain().name();
  for (std::size_t i = 0; i < m.ids.size(); ++i) {
    if (lr.labels[i] >= table.vocabulary().size()) throw io_error("category id out of range");
    m.ids[i] = static_cast<CategoryId>(lr.labels[i]);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Table validation

/// One grid axis: every listed role takes the same normalised level t in
/// [0, 1], mapped onto that role's admissible range.
struct GridAxis {
  std::vector<BandRole> roles;
  std::size_t levels = 50;
};

struct GridSpec {
  std::vector<GridAxis> axes;
  /// Extra uniformly random points over the full per-role domain.
  std::size_t random_samples = 0;
  std::uint64_t seed = 1;
};

struct ValidationReport {
  std::uint64_t evaluated = 0;
  std::uint64_t holes = 0;
  std::vector<std::vector<std::pair<BandRole, double>>> examples;

  bool ok() const { return holes == 0; }
};

/// All 256^3 byte triples.
inline GridSpec full_rgb_cube() {
  return GridSpec{{GridAxis{{BandRole::R}, 256}, GridAxis{{BandRole::G}, 256},
                   GridAxis{{BandRole::B}, 256}},
                  0,
                  1};
}

/// levels^3 grid over a subsystem: its roles, in order, split into three
/// contiguous groups that share a level.
inline GridSpec subsystem_grid(SiamSubsystem s, std::size_t levels = 50,
                               std::size_t random_samples = 0) {
  const auto roles = subsystem_roles(s);
  GridSpec g;
  const std::size_t n = roles.size();
  std::size_t start = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t len = n / 3 + (k < n % 3 ? 1 : 0);
    GridAxis ax;
    ax.levels = levels;
    ax.roles.assign(roles.begin() + static_cast<std::ptrdiff_t>(start),
                    roles.begin() + static_cast<std::ptrdiff_t>(start + len));
    start += len;
    g.axes.push_back(std::move(ax));
  }
  g.random_samples = random_samples;
  return g;
}

/// Evaluates the table over the grid and reports inputs no category matches.
inline ValidationReport validate_rule_table(const RuleTable& table, const GridSpec& grid,
                                            std::size_t max_examples = 16) {
  ValidationReport rep;
  const bool rgb = table.domain().rgb;
  const auto roles = table.domain().roles();
  PixelFeatures px;
  auto check = [&] {
    table.compute_features(px);
    ++rep.evaluated;
    if (table.classify(px) == kNoCategory) {
      ++rep.holes;
      if (rep.examples.size() < max_examples) {
        std::vector<std::pair<BandRole, double>> e;
        for (BandRole r : roles) e.emplace_back(r, px.role(r));
        rep.examples.push_back(std::move(e));
      }
    }
  };
  auto level_value = [&](BandRole r, std::size_t i, std::size_t levels) {
    const DomainRange dr = role_range(r, rgb);
    if (levels <= 1) return dr.lo;
    return dr.lo + (dr.hi - dr.lo) * static_cast<double>(i) / static_cast<double>(levels - 1);
  };

  if (!grid.axes.empty()) {
    std::vector<std::size_t> idx(grid.axes.size(), 0);
    for (;;) {
      for (std::size_t a = 0; a < grid.axes.size(); ++a)
        for (BandRole r : grid.axes[a].roles)
          px.v[static_cast<std::size_t>(r)] = level_value(r, idx[a], grid.axes[a].levels);
      check();
      std::size_t a = grid.axes.size();
      while (a > 0) {
        --a;
        if (++idx[a] < grid.axes[a].levels) break;
        idx[a] = 0;
        if (a == 0) {
          a = grid.axes.size() + 1;
          break;
        }
      }
      if (a == grid.axes.size() + 1) break;
    }
  }

  std::mt19937_64 rng(grid.seed);
  for (std::size_t s = 0; s < grid.random_samples; ++s) {
    for (BandRole r : roles) {
      const DomainRange dr = role_range(r, rgb);
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      px.v[static_cast<std::size_t>(r)] = rgb ? std::floor(u * 256.0) : dr.lo + u * (dr.hi - dr.lo);
    }
    check();
  }
  return rep;
}

}  // namespace cloudmask
