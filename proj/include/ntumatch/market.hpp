#ifndef NTUMATCH_MARKET_HPP
#define NTUMATCH_MARKET_HPP

#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "ntumatch/errors.hpp"
#include "ntumatch/rng.hpp"

namespace ntumatch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// id 0 is reserved for the outside option everywhere.
inline constexpr int kOutsideId = 0;

enum class SchoolType { NonSelecting, SelectingA, SelectingB };

enum class GenderRestriction { None, FemaleOnly, MaleOnly };

inline const char* to_string(SchoolType t) {
    switch (t) {
        case SchoolType::NonSelecting: return "nonselecting";
        case SchoolType::SelectingA: return "selecting_a";
        case SchoolType::SelectingB: return "selecting_b";
    }
    return "?";
}

struct StudentRecord {
    int id = 0;                  // positive
    Vector y;                    // demand shifters, one per college
    Vector w;                    // supply shifters, one per college
    Vector z;                    // covariates entering both sides
    std::string gender;          // "", "f", or "m"
    std::set<std::string> tags;  // e.g. low_income, out_of_market
};

struct CollegeRecord {
    int id = 0;  // positive
    int capacity = 0;
    SchoolType type = SchoolType::SelectingA;
    Vector attributes;
    GenderRestriction genderRestriction = GenderRestriction::None;

    bool selecting() const { return type != SchoolType::NonSelecting; }
};

struct Market {
    std::vector<StudentRecord> students;
    std::vector<CollegeRecord> colleges;
    std::vector<std::string> zNames;
    std::vector<std::string> attributeNames;
    // Lottery tags break ties at non-selecting colleges; drawn once per market.
    std::vector<double> lottery;

    int numStudents() const { return static_cast<int>(students.size()); }
    int numColleges() const { return static_cast<int>(colleges.size()); }
    int zDim() const { return students.empty() ? 0 : static_cast<int>(students.front().z.size()); }

    int collegeIndexById(int id) const {
        for (int j = 0; j < numColleges(); ++j)
            if (colleges[j].id == id) return j;
        throw InvalidInput("unknown college id " + std::to_string(id));
    }

    int totalCapacity() const {
        int q = 0;
        for (const auto& c : colleges) q += c.capacity;
        return q;
    }

    bool hasExcessDemand() const { return totalCapacity() < numStudents(); }

    /// Gender eligibility; restriction applies regardless of preferences.
    bool eligible(int studentIdx, int collegeIdx) const {
        const auto r = colleges[collegeIdx].genderRestriction;
        if (r == GenderRestriction::None) return true;
        const std::string& g = students[studentIdx].gender;
        if (r == GenderRestriction::FemaleOnly) return g == "f";
        return g == "m";
    }

    bool outOfMarket(int studentIdx) const { return students[studentIdx].tags.count("out_of_market") > 0; }

    void ensureLottery(std::uint64_t seed = 0x10175ULL) {
        if (static_cast<int>(lottery.size()) == numStudents()) return;
        lottery.resize(students.size());
        for (std::size_t i = 0; i < students.size(); ++i)
            lottery[i] = static_cast<double>(splitmix64(seed ^ static_cast<std::uint64_t>(students[i].id))) * 0x1.0p-64;
    }

    void validate() const {
        if (students.empty()) throw InvalidInput("market has no students");
        if (colleges.empty()) throw InvalidInput("market has no colleges");
        const int C = numColleges();
        const int dz = static_cast<int>(students.front().z.size());
        std::set<int> sids, cids;
        for (const auto& s : students) {
            if (s.id <= 0) throw InvalidInput("student ids must be positive");
            if (!sids.insert(s.id).second) throw InvalidInput("duplicate student id " + std::to_string(s.id));
            if (s.y.size() != C || s.w.size() != C)
                throw InvalidInput("student " + std::to_string(s.id) + ": y/w dimension != number of colleges");
            if (static_cast<int>(s.z.size()) != dz)
                throw InvalidInput("student " + std::to_string(s.id) + ": inconsistent z dimension");
            for (int j = 0; j < C; ++j)
                if (!std::isfinite(s.y[j]) || !std::isfinite(s.w[j]))
                    throw InvalidInput("student " + std::to_string(s.id) + ": non-finite covariate");
            for (int k = 0; k < dz; ++k)
                if (!std::isfinite(s.z[k])) throw InvalidInput("student " + std::to_string(s.id) + ": non-finite z");
        }
        for (const auto& c : colleges) {
            if (c.id <= 0) throw InvalidInput("college ids must be positive (0 is the outside option)");
            if (!cids.insert(c.id).second) throw InvalidInput("duplicate college id " + std::to_string(c.id));
            if (c.capacity < 1) throw InvalidInput("college " + std::to_string(c.id) + ": capacity must be >= 1");
        }
    }
};

/// Latent utilities for one market draw. studentU column 0 is the outside
/// option; it holds the actual draw, never a forced zero. collegeV rows for
/// non-selecting colleges are identically zero by convention.
struct LatentUtilities {
    Matrix studentU;  // n x (C+1)
    Matrix collegeV;  // C x n

    int numStudents() const { return static_cast<int>(studentU.rows()); }
    int numColleges() const { return static_cast<int>(collegeV.rows()); }

    void validate(const Market& m) const {
        if (studentU.rows() != m.numStudents() || studentU.cols() != m.numColleges() + 1)
            throw InvalidInput("studentU has wrong shape");
        if (collegeV.rows() != m.numColleges() || collegeV.cols() != m.numStudents())
            throw InvalidInput("collegeV has wrong shape");
        if (!studentU.allFinite() || !collegeV.allFinite()) throw InvalidInput("non-finite utility");
    }
};

/// Admission cutoff: either a finite score or "not binding" (conceptually
/// -inf). Kept as a tagged value so files round-trip exactly.
struct Cutoff {
    bool binding = false;
    double value = 0.0;

    static Cutoff none() { return {false, 0.0}; }
    static Cutoff at(double v) { return {true, v}; }

    bool admits(double score) const { return !binding || score >= value; }

    bool operator==(const Cutoff& o) const {
        return binding == o.binding && (!binding || value == o.value);
    }
};

struct Matching {
    std::vector<int> assignment;  // by student index; college id or 0
    std::vector<Cutoff> cutoffs;  // by college index
    bool tieBroken = false;       // a non-generic exact tie was resolved by id

    int assignedCount(const Market& m, int collegeIdx) const {
        const int id = m.colleges[collegeIdx].id;
        int n = 0;
        for (int a : assignment) n += (a == id);
        return n;
    }
};

} // namespace ntumatch

#endif
