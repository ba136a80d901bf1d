#ifndef NTUMATCH_DESIGN_HPP
#define NTUMATCH_DESIGN_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include "ntumatch/market.hpp"

namespace ntumatch {

/// Which colleges a term (or a shock-scale group) applies to.
struct TermScope {
    bool all = true;
    std::set<SchoolType> types;
    std::set<int> collegeIds;

    static TermScope everywhere() { return {}; }
    static TermScope ofType(SchoolType t) { return {false, {t}, {}}; }
    static TermScope ofCollege(int id) { return {false, {}, {id}}; }

    bool applies(const CollegeRecord& c) const {
        if (all) return true;
        if (types.count(c.type)) return true;
        return collegeIds.count(c.id) > 0;
    }
};

enum class Side { Student, College };

/// One linear term: coefficient * base [* interact]. Variables refer to pair
/// shifters ("y", "w"), student covariates by name, school attributes by
/// name, tags, gender dummies ("female"/"male"), or the constant "1".
struct SpecTerm {
    std::string coefficient;
    std::string base;
    std::string interact;  // empty when not an interaction
    Side side = Side::Student;
    TermScope scope;
};

/// Scale of the student-side utility shock for a group of colleges. At most
/// one group applies per college; colleges outside every group have scale 1.
struct ShockScale {
    std::string name;
    TermScope scope;
    bool estimated = false;
    double value = 1.0;
};

struct EmpiricalSpec {
    std::vector<SpecTerm> studentTerms;
    std::vector<SpecTerm> collegeTerms;
    std::vector<ShockScale> shockScales;

    std::vector<std::string> coefficientNames() const {
        std::vector<std::string> names;
        std::set<std::string> seen;
        for (const auto* terms : {&studentTerms, &collegeTerms})
            for (const auto& t : *terms)
                if (seen.insert(t.coefficient).second) names.push_back(t.coefficient);
        return names;
    }
};

namespace detail {

inline double resolve_variable(const std::string& var, const Market& m, int i, int c) {
    if (var == "y") return m.students[i].y[c];
    if (var == "w") return m.students[i].w[c];
    if (var == "1") return 1.0;
    if (var == "female") return m.students[i].gender == "f" ? 1.0 : 0.0;
    if (var == "male") return m.students[i].gender == "m" ? 1.0 : 0.0;
    for (std::size_t k = 0; k < m.zNames.size(); ++k)
        if (m.zNames[k] == var) return m.students[i].z[static_cast<int>(k)];
    for (std::size_t a = 0; a < m.attributeNames.size(); ++a)
        if (m.attributeNames[a] == var) return m.colleges[c].attributes[static_cast<int>(a)];
    if (m.students[i].tags.count(var)) return 1.0;
    // a known tag name absent on this student is 0, unknown names are errors
    static const std::set<std::string> knownTags{"low_income", "out_of_market"};
    if (knownTags.count(var)) return 0.0;
    throw SchemaError("unknown variable '" + var + "'");
}

inline double term_value(const SpecTerm& t, const Market& m, int i, int c) {
    double v = resolve_variable(t.base, m, i, c);
    if (!t.interact.empty()) v *= resolve_variable(t.interact, m, i, c);
    return v;
}

} // namespace detail

/// Design matrices materialized per college, with columns mapped into one
/// global coefficient vector (so coefficients shared across colleges pool
/// their observations).
struct CompiledDesign {
    struct Block {
        Matrix X;                  // n x k
        std::vector<int> coefIdx;  // k entries into the global vector
    };

    std::vector<std::string> coefficientNames;
    std::vector<Block> studentBlocks;  // one per college
    std::vector<Block> collegeBlocks;  // empty X for non-selecting colleges
    std::vector<int> scaleGroup;       // per college; -1 = fixed scale
    std::vector<double> fixedScale;    // per college, used when scaleGroup == -1
    std::vector<std::string> scaleNames;
    std::vector<bool> scaleEstimated;
    std::vector<double> scaleValues;  // initial / fixed values per group

    int numCoefficients() const { return static_cast<int>(coefficientNames.size()); }
    int numEstimatedScales() const {
        int k = 0;
        for (bool e : scaleEstimated) k += e;
        return k;
    }

    int coefficientIndex(const std::string& name) const {
        for (std::size_t k = 0; k < coefficientNames.size(); ++k)
            if (coefficientNames[k] == name) return static_cast<int>(k);
        throw SchemaError("unknown coefficient '" + name + "'");
    }
};

inline CompiledDesign compileDesign(const EmpiricalSpec& spec, const Market& market) {
    const int n = market.numStudents();
    const int C = market.numColleges();
    CompiledDesign d;
    d.coefficientNames = spec.coefficientNames();

    std::map<std::string, int> coefOf;
    for (std::size_t k = 0; k < d.coefficientNames.size(); ++k) coefOf[d.coefficientNames[k]] = static_cast<int>(k);

    auto buildBlocks = [&](const std::vector<SpecTerm>& terms, Side side) {
        std::vector<CompiledDesign::Block> blocks(C);
        for (int c = 0; c < C; ++c) {
            if (side == Side::College && !market.colleges[c].selecting()) continue;
            std::vector<const SpecTerm*> active;
            for (const auto& t : terms)
                if (t.scope.applies(market.colleges[c])) active.push_back(&t);
            auto& b = blocks[c];
            b.X.resize(n, static_cast<int>(active.size()));
            for (std::size_t k = 0; k < active.size(); ++k) {
                b.coefIdx.push_back(coefOf.at(active[k]->coefficient));
                for (int i = 0; i < n; ++i) b.X(i, static_cast<int>(k)) = detail::term_value(*active[k], market, i, c);
            }
        }
        return blocks;
    };
    d.studentBlocks = buildBlocks(spec.studentTerms, Side::Student);
    d.collegeBlocks = buildBlocks(spec.collegeTerms, Side::College);

    d.scaleGroup.assign(C, -1);
    d.fixedScale.assign(C, 1.0);
    for (const auto& g : spec.shockScales) {
        d.scaleNames.push_back(g.name);
        d.scaleEstimated.push_back(g.estimated);
        d.scaleValues.push_back(g.value);
    }
    for (int c = 0; c < C; ++c) {
        for (std::size_t gi = 0; gi < spec.shockScales.size(); ++gi) {
            if (spec.shockScales[gi].scope.applies(market.colleges[c])) {
                if (d.scaleGroup[c] != -1)
                    throw SchemaError("college " + std::to_string(market.colleges[c].id) +
                                      " is in two shock-scale groups");
                d.scaleGroup[c] = static_cast<int>(gi);
            }
        }
    }
    return d;
}

/// Evaluate utilities as index + scale * shock. The shock argument carries
/// noise with the same shape as the output; the outside-option column passes
/// through unscaled (its variance is pinned to 1).
inline LatentUtilities buildUtilities(const CompiledDesign& design, const Market& market, const Vector& coeffs,
                                      const LatentUtilities& shocks,
                                      const std::vector<double>* scaleOverride = nullptr) {
    const int n = market.numStudents();
    const int C = market.numColleges();
    if (coeffs.size() != design.numCoefficients()) throw InvalidInput("coefficient vector length != spec arity");

    auto scaleOf = [&](int c) {
        if (design.scaleGroup[c] < 0) return design.fixedScale[c];
        if (scaleOverride) return (*scaleOverride)[design.scaleGroup[c]];
        return design.scaleValues[design.scaleGroup[c]];
    };

    LatentUtilities out;
    out.studentU.resize(n, C + 1);
    out.collegeV = Matrix::Zero(C, n);
    out.studentU.col(0) = shocks.studentU.col(0);
    for (int c = 0; c < C; ++c) {
        const auto& b = design.studentBlocks[c];
        Vector idx = Vector::Zero(n);
        for (std::size_t k = 0; k < b.coefIdx.size(); ++k) idx += b.X.col(static_cast<int>(k)) * coeffs[b.coefIdx[k]];
        out.studentU.col(c + 1) = idx + scaleOf(c) * shocks.studentU.col(c + 1);
        if (market.colleges[c].selecting()) {
            const auto& bc = design.collegeBlocks[c];
            Vector vidx = Vector::Zero(n);
            for (std::size_t k = 0; k < bc.coefIdx.size(); ++k)
                vidx += bc.X.col(static_cast<int>(k)) * coeffs[bc.coefIdx[k]];
            out.collegeV.row(c) = (vidx + shocks.collegeV.row(c).transpose()).transpose();
        }
    }
    return out;
}

inline LatentUtilities buildUtilities(const EmpiricalSpec& spec, const Market& market, const Vector& coeffs,
                                      const LatentUtilities& shocks) {
    return buildUtilities(compileDesign(spec, market), market, coeffs, shocks);
}

/// Standard-normal shock draw in LatentUtilities shape.
inline LatentUtilities drawShocks(const Market& market, RngStream& rng) {
    LatentUtilities s;
    const int n = market.numStudents();
    const int C = market.numColleges();
    s.studentU.resize(n, C + 1);
    s.collegeV.resize(C, n);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c <= C; ++c) s.studentU(i, c) = rng.normal();
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < n; ++i) s.collegeV(c, i) = market.colleges[c].selecting() ? rng.normal() : 0.0;
    return s;
}

} // namespace ntumatch

#endif
