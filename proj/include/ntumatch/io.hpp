#ifndef NTUMATCH_IO_HPP
#define NTUMATCH_IO_HPP

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ntumatch/config.hpp"
#include "ntumatch/csv.hpp"
#include "ntumatch/gibbs.hpp"
#include "ntumatch/market.hpp"
#include "ntumatch/matching_ops.hpp"

namespace ntumatch {

struct LoadedMarket {
    Market market;
    Matching observed;
    std::vector<bool> bindingStatus;  // per college: observed enrollment == capacity
    bool excessDemand = false;
};

/// Column-role description of the two tables. The sidecar keeps the CSV
/// headers free-form while the loader stays strict.
struct DataSchemaKeys {
    static std::map<std::string, std::set<std::string>> allowed() {
        return {
            {"students", {"id", "matched", "gender", "lottery", "y", "w", "z", "tags"}},
            {"schools", {"id", "type", "capacity", "gender_restriction", "attributes"}},
        };
    }
};

inline SchoolType parseSchoolType(const std::string& s, const std::string& where) {
    if (s == "nonselecting") return SchoolType::NonSelecting;
    if (s == "selecting_a") return SchoolType::SelectingA;
    if (s == "selecting_b") return SchoolType::SelectingB;
    throw SchemaError(where + ": unknown school type '" + s + "'");
}

inline GenderRestriction parseGenderRestriction(const std::string& s, const std::string& where) {
    if (s.empty() || s == "none") return GenderRestriction::None;
    if (s == "f" || s == "female") return GenderRestriction::FemaleOnly;
    if (s == "m" || s == "male") return GenderRestriction::MaleOnly;
    throw SchemaError(where + ": unknown gender restriction '" + s + "'");
}

inline LoadedMarket loadMarket(const std::string& studentsPath, const std::string& schoolsPath,
                               const std::string& schemaPath) {
    RunConfig schema = RunConfig::parse(schemaPath);
    schema.validateKeys(DataSchemaKeys::allowed());

    LoadedMarket out;
    Market& m = out.market;

    {  // schools first: column sizes of the student table depend on C
        const CsvTable t = csv::read(schoolsPath);
        const int idCol = t.requireColumn(schema.get("schools", "id", "id"));
        const int typeCol = t.requireColumn(schema.get("schools", "type", "type"));
        const int capCol = t.requireColumn(schema.get("schools", "capacity", "capacity"));
        const std::string grName = schema.get("schools", "gender_restriction", "");
        const int grCol = grName.empty() ? -1 : t.requireColumn(grName);
        m.attributeNames = schema.getStringList("schools", "attributes");
        std::vector<int> attrCols;
        for (const auto& a : m.attributeNames) attrCols.push_back(t.requireColumn(a));

        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const auto& row = t.rows[r];
            const std::string where = schoolsPath + " row " + std::to_string(r + 2);
            CollegeRecord c;
            c.id = static_cast<int>(csv::parseLong(row[idCol], where));
            c.type = parseSchoolType(row[typeCol], where);
            c.capacity = static_cast<int>(csv::parseLong(row[capCol], where));
            if (grCol >= 0) c.genderRestriction = parseGenderRestriction(row[grCol], where);
            c.attributes.resize(static_cast<int>(attrCols.size()));
            for (std::size_t a = 0; a < attrCols.size(); ++a)
                c.attributes[static_cast<int>(a)] = csv::parseDouble(row[attrCols[a]], where);
            m.colleges.push_back(std::move(c));
        }
    }

    {
        const CsvTable t = csv::read(studentsPath);
        const int idCol = t.requireColumn(schema.get("students", "id", "id"));
        const int matchCol = t.requireColumn(schema.get("students", "matched", "matched_school_id"));
        const std::string genderName = schema.get("students", "gender", "");
        const int genderCol = genderName.empty() ? -1 : t.requireColumn(genderName);
        const std::string lotteryName = schema.get("students", "lottery", "");
        const int lotteryCol = lotteryName.empty() ? -1 : t.columnIndex(lotteryName);

        std::vector<int> yCols, wCols, zCols, tagCols;
        const auto yNames = schema.getStringList("students", "y");
        const auto wNames = schema.getStringList("students", "w");
        m.zNames = schema.getStringList("students", "z");
        const auto tagNames = schema.getStringList("students", "tags");
        if (static_cast<int>(yNames.size()) != m.numColleges() || yNames.size() != wNames.size())
            throw SchemaError("schema must list one y and one w column per school");
        for (const auto& nme : yNames) yCols.push_back(t.requireColumn(nme));
        for (const auto& nme : wNames) wCols.push_back(t.requireColumn(nme));
        for (const auto& nme : m.zNames) zCols.push_back(t.requireColumn(nme));
        for (const auto& nme : tagNames) tagCols.push_back(t.requireColumn(nme));

        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const auto& row = t.rows[r];
            const std::string where = studentsPath + " row " + std::to_string(r + 2);
            StudentRecord s;
            s.id = static_cast<int>(csv::parseLong(row[idCol], where));
            if (genderCol >= 0) s.gender = row[genderCol];
            s.y.resize(m.numColleges());
            s.w.resize(m.numColleges());
            s.z.resize(static_cast<int>(zCols.size()));
            for (std::size_t k = 0; k < yCols.size(); ++k) s.y[static_cast<int>(k)] = csv::parseDouble(row[yCols[k]], where);
            for (std::size_t k = 0; k < wCols.size(); ++k) s.w[static_cast<int>(k)] = csv::parseDouble(row[wCols[k]], where);
            for (std::size_t k = 0; k < zCols.size(); ++k) s.z[static_cast<int>(k)] = csv::parseDouble(row[zCols[k]], where);
            for (std::size_t k = 0; k < tagCols.size(); ++k)
                if (csv::parseDouble(row[tagCols[k]], where) != 0.0) s.tags.insert(tagNames[k]);
            const int matched = static_cast<int>(csv::parseLong(row[matchCol], where));
            if (matched != kOutsideId) {
                bool known = false;
                for (const auto& c : m.colleges) known |= (c.id == matched);
                if (!known) throw SchemaError(where + ": matched_school_id " + std::to_string(matched) +
                                              " is not a school id");
            }
            out.observed.assignment.push_back(matched);
            if (lotteryCol >= 0) m.lottery.push_back(csv::parseDouble(row[lotteryCol], where));
            m.students.push_back(std::move(s));
        }
    }

    m.validate();
    m.ensureLottery();
    out.observed.cutoffs.assign(m.numColleges(), Cutoff::none());

    out.bindingStatus.resize(m.numColleges());
    for (int c = 0; c < m.numColleges(); ++c) {
        const int count = out.observed.assignedCount(m, c);
        if (count > m.colleges[c].capacity)
            throw DataError("school " + std::to_string(m.colleges[c].id) + ": observed enrollment " +
                            std::to_string(count) + " exceeds capacity " +
                            std::to_string(m.colleges[c].capacity));
        out.bindingStatus[c] = count == m.colleges[c].capacity;
    }
    out.excessDemand = m.hasExcessDemand();
    return out;
}

inline void saveMarket(const Market& m, const Matching& observed, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const int C = m.numColleges();

    {
        csv::Writer w(dir + "/schools.csv");
        std::vector<std::string> header{"id", "type", "capacity", "gender_restriction"};
        for (const auto& a : m.attributeNames) header.push_back(a);
        w.row(header);
        for (const auto& c : m.colleges) {
            std::vector<std::string> row{std::to_string(c.id), to_string(c.type), std::to_string(c.capacity),
                                         c.genderRestriction == GenderRestriction::None
                                             ? "none"
                                             : (c.genderRestriction == GenderRestriction::FemaleOnly ? "f" : "m")};
            for (int a = 0; a < c.attributes.size(); ++a) row.push_back(csv::formatDouble(c.attributes[a]));
            w.row(row);
        }
    }

    std::vector<std::string> tagNames{"low_income", "out_of_market"};
    {
        csv::Writer w(dir + "/students.csv");
        std::vector<std::string> header{"id", "gender"};
        for (int c = 1; c <= C; ++c) header.push_back("y_" + std::to_string(c));
        for (int c = 1; c <= C; ++c) header.push_back("w_" + std::to_string(c));
        for (const auto& zn : m.zNames) header.push_back(zn);
        for (const auto& tg : tagNames) header.push_back(tg);
        header.push_back("lottery");
        header.push_back("matched_school_id");
        w.row(header);
        for (int i = 0; i < m.numStudents(); ++i) {
            const auto& s = m.students[i];
            std::vector<std::string> row{std::to_string(s.id), s.gender};
            for (int c = 0; c < C; ++c) row.push_back(csv::formatDouble(s.y[c]));
            for (int c = 0; c < C; ++c) row.push_back(csv::formatDouble(s.w[c]));
            for (int k = 0; k < s.z.size(); ++k) row.push_back(csv::formatDouble(s.z[k]));
            for (const auto& tg : tagNames) row.push_back(s.tags.count(tg) ? "1" : "0");
            row.push_back(csv::formatDouble(m.lottery.empty() ? 0.0 : m.lottery[i]));
            row.push_back(std::to_string(observed.assignment.empty() ? kOutsideId : observed.assignment[i]));
            w.row(row);
        }
    }

    {
        RunConfig schema;
        schema.set("students", "id", "id");
        schema.set("students", "matched", "matched_school_id");
        schema.set("students", "gender", "gender");
        schema.set("students", "lottery", "lottery");
        std::string ys, ws, zs, tags;
        for (int c = 1; c <= C; ++c) {
            ys += (c > 1 ? "," : "") + std::string("y_") + std::to_string(c);
            ws += (c > 1 ? "," : "") + std::string("w_") + std::to_string(c);
        }
        for (std::size_t k = 0; k < m.zNames.size(); ++k) zs += (k ? "," : "") + m.zNames[k];
        for (std::size_t k = 0; k < tagNames.size(); ++k) tags += (k ? "," : "") + tagNames[k];
        schema.set("students", "y", ys);
        schema.set("students", "w", ws);
        schema.set("students", "z", zs);
        schema.set("students", "tags", tags);
        schema.set("schools", "id", "id");
        schema.set("schools", "type", "type");
        schema.set("schools", "capacity", "capacity");
        schema.set("schools", "gender_restriction", "gender_restriction");
        std::string attrs;
        for (std::size_t k = 0; k < m.attributeNames.size(); ++k) attrs += (k ? "," : "") + m.attributeNames[k];
        schema.set("schools", "attributes", attrs);
        schema.write(dir + "/schema.cfg");
    }
}

inline void saveCutoffs(const Market& m, const std::vector<Cutoff>& cutoffs, const std::string& path) {
    csv::Writer w(path);
    w.row({"school_id", "cutoff"});
    for (int c = 0; c < m.numColleges(); ++c)
        w.row({std::to_string(m.colleges[c].id),
               cutoffs[c].binding ? csv::formatDouble(cutoffs[c].value) : "-inf"});
}

inline std::vector<Cutoff> loadCutoffs(const Market& m, const std::string& path) {
    const CsvTable t = csv::read(path);
    const int idCol = t.requireColumn("school_id");
    const int cutCol = t.requireColumn("cutoff");
    std::vector<Cutoff> out(m.numColleges(), Cutoff::none());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const int c = m.collegeIndexById(static_cast<int>(csv::parseLong(t.rows[r][idCol], path)));
        const std::string& cell = t.rows[r][cutCol];
        out[c] = (cell == "-inf") ? Cutoff::none() : Cutoff::at(csv::parseDouble(cell, path));
    }
    return out;
}

inline void saveUtilities(const Market& m, const LatentUtilities& u, const std::string& path) {
    csv::Writer w(path);
    std::vector<std::string> header{"student_id", "u_0"};
    for (int c = 0; c < m.numColleges(); ++c) header.push_back("u_" + std::to_string(m.colleges[c].id));
    for (int c = 0; c < m.numColleges(); ++c) header.push_back("v_" + std::to_string(m.colleges[c].id));
    w.row(header);
    for (int i = 0; i < m.numStudents(); ++i) {
        std::vector<std::string> row{std::to_string(m.students[i].id)};
        for (int c = 0; c <= m.numColleges(); ++c) row.push_back(csv::formatDouble(u.studentU(i, c)));
        for (int c = 0; c < m.numColleges(); ++c) row.push_back(csv::formatDouble(u.collegeV(c, i)));
        w.row(row);
    }
}

inline LatentUtilities loadUtilities(const Market& m, const std::string& path) {
    const CsvTable t = csv::read(path);
    if (static_cast<int>(t.rows.size()) != m.numStudents()) throw SchemaError(path + ": row count != students");
    LatentUtilities u;
    u.studentU.resize(m.numStudents(), m.numColleges() + 1);
    u.collegeV.resize(m.numColleges(), m.numStudents());
    const int u0 = t.requireColumn("u_0");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        u.studentU(static_cast<int>(r), 0) = csv::parseDouble(t.rows[r][u0], path);
        for (int c = 0; c < m.numColleges(); ++c) {
            u.studentU(static_cast<int>(r), c + 1) =
                csv::parseDouble(t.rows[r][t.requireColumn("u_" + std::to_string(m.colleges[c].id))], path);
            u.collegeV(c, static_cast<int>(r)) =
                csv::parseDouble(t.rows[r][t.requireColumn("v_" + std::to_string(m.colleges[c].id))], path);
        }
    }
    return u;
}

// --- utility-spec files ---
// Line format, order-preserving:
//   student <coefficient> <base>[*<interact>] @ <scope>
//   college <coefficient> <base>[*<interact>] @ <scope>
//   scale <name> <estimated|fixed> <value> @ <scope>
// scope := all | college:ID[,ID...] | type:NAME[,NAME...]

inline std::string scopeToString(const TermScope& s) {
    if (s.all) return "all";
    std::string out;
    if (!s.collegeIds.empty()) {
        out = "college:";
        bool first = true;
        for (int id : s.collegeIds) {
            if (!first) out += ',';
            out += std::to_string(id);
            first = false;
        }
        return out;
    }
    out = "type:";
    bool first = true;
    for (auto t : s.types) {
        if (!first) out += ',';
        out += to_string(t);
        first = false;
    }
    return out;
}

inline TermScope parseScope(const std::string& s, const std::string& where) {
    if (s == "all") return TermScope::everywhere();
    TermScope out;
    out.all = false;
    if (s.rfind("college:", 0) == 0) {
        for (const auto& cell : csv::splitLine(s.substr(8)))
            out.collegeIds.insert(static_cast<int>(csv::parseLong(cell, where)));
        return out;
    }
    if (s.rfind("type:", 0) == 0) {
        for (const auto& cell : csv::splitLine(s.substr(5))) out.types.insert(parseSchoolType(cell, where));
        return out;
    }
    throw SchemaError(where + ": bad scope '" + s + "'");
}

inline void saveSpec(const EmpiricalSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "# utility specification\n";
    auto writeTerm = [&](const char* side, const SpecTerm& t) {
        out << side << ' ' << t.coefficient << ' ' << t.base;
        if (!t.interact.empty()) out << '*' << t.interact;
        out << " @ " << scopeToString(t.scope) << '\n';
    };
    for (const auto& t : spec.studentTerms) writeTerm("student", t);
    for (const auto& t : spec.collegeTerms) writeTerm("college", t);
    for (const auto& g : spec.shockScales)
        out << "scale " << g.name << ' ' << (g.estimated ? "estimated" : "fixed") << ' '
            << csv::formatDouble(g.value) << " @ " << scopeToString(g.scope) << '\n';
}

inline EmpiricalSpec loadSpec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open spec " + path);
    EmpiricalSpec spec;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        const std::string where = path + ":" + std::to_string(lineNo);
        std::istringstream ss(line);
        std::string kind;
        if (!(ss >> kind) || kind[0] == '#') continue;
        if (kind == "student" || kind == "college") {
            std::string coef, expr, at, scope;
            if (!(ss >> coef >> expr >> at >> scope) || at != "@") throw SchemaError(where + ": malformed term");
            SpecTerm t;
            t.coefficient = coef;
            const auto star = expr.find('*');
            t.base = expr.substr(0, star);
            if (star != std::string::npos) t.interact = expr.substr(star + 1);
            t.side = kind == "student" ? Side::Student : Side::College;
            t.scope = parseScope(scope, where);
            (t.side == Side::Student ? spec.studentTerms : spec.collegeTerms).push_back(std::move(t));
        } else if (kind == "scale") {
            std::string name, mode, value, at, scope;
            if (!(ss >> name >> mode >> value >> at >> scope) || at != "@")
                throw SchemaError(where + ": malformed scale");
            ShockScale g;
            g.name = name;
            g.estimated = mode == "estimated";
            if (!g.estimated && mode != "fixed") throw SchemaError(where + ": scale mode must be estimated|fixed");
            g.value = csv::parseDouble(value, where);
            g.scope = parseScope(scope, where);
            spec.shockScales.push_back(std::move(g));
        } else {
            throw SchemaError(where + ": unknown line kind '" + kind + "'");
        }
    }
    return spec;
}

inline void saveChain(const PosteriorChain& chain, const std::string& path) {
    csv::Writer w(path);
    std::vector<std::string> header{"iteration"};
    for (const auto& nme : chain.parameterNames) header.push_back(nme);
    w.row(header);
    for (int r = 0; r < chain.draws.rows(); ++r) {
        std::vector<std::string> row{std::to_string(r)};
        for (int k = 0; k < chain.draws.cols(); ++k) row.push_back(csv::formatDouble(chain.draws(r, k)));
        w.row(row);
    }
}

inline PosteriorChain loadChain(const std::string& path) {
    const CsvTable t = csv::read(path);
    PosteriorChain chain;
    for (std::size_t k = 1; k < t.header.size(); ++k) chain.parameterNames.push_back(t.header[k]);
    chain.draws.resize(static_cast<int>(t.rows.size()), static_cast<int>(chain.parameterNames.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (std::size_t k = 1; k < t.header.size(); ++k)
            chain.draws(static_cast<int>(r), static_cast<int>(k - 1)) = csv::parseDouble(t.rows[r][k], path);
    return chain;
}

/// Chain checkpoint: kept draws plus the full sampler state (latent
/// utilities, parameters, cutoffs, RNG) so a run resumes bit-identically.
inline void saveCheckpoint(const GibbsSampler& sampler, const GibbsSampler::State& s, const Matrix& drawsSoFar,
                           const std::string& prefix) {
    {
        PosteriorChain partial;
        partial.parameterNames = sampler.parameterNames();
        partial.draws = drawsSoFar;
        saveChain(partial, prefix + ".draws.csv");
    }
    std::ofstream out(prefix + ".state.txt");
    if (!out) throw DataError("cannot write checkpoint " + prefix);
    out << "sweeps " << s.sweepsDone << "\n";
    out << "chain " << s.chainIndex << "\n";
    out << "ties " << s.cutoffTies << "\n";
    out << "coeffs";
    for (int k = 0; k < s.coeffs.size(); ++k) out << ' ' << csv::formatDouble(s.coeffs[k]);
    out << "\nsigma2";
    for (double v : s.sigma2) out << ' ' << csv::formatDouble(v);
    out << "\ncutoffs";
    for (const auto& c : s.cutoffs) out << ' ' << (c.binding ? csv::formatDouble(c.value) : "-inf");
    out << "\nu " << s.u.rows() << ' ' << s.u.cols() << '\n';
    for (int i = 0; i < s.u.rows(); ++i)
        for (int c = 0; c < s.u.cols(); ++c) out << csv::formatDouble(s.u(i, c)) << (c + 1 == s.u.cols() ? '\n' : ' ');
    out << "v " << s.v.rows() << ' ' << s.v.cols() << '\n';
    for (int c = 0; c < s.v.rows(); ++c)
        for (int i = 0; i < s.v.cols(); ++i) out << csv::formatDouble(s.v(c, i)) << (i + 1 == s.v.cols() ? '\n' : ' ');
    out << "rng " << s.rng.engine() << '\n';
}

inline std::pair<GibbsSampler::State, Matrix> loadCheckpoint(const GibbsSampler& sampler, const std::string& prefix) {
    GibbsSampler::State s = sampler.initState(0);
    std::ifstream in(prefix + ".state.txt");
    if (!in) throw DataError("cannot open checkpoint " + prefix);
    std::string tag;
    in >> tag >> s.sweepsDone;
    in >> tag >> s.chainIndex;
    in >> tag >> s.cutoffTies;
    in >> tag;
    for (int k = 0; k < s.coeffs.size(); ++k) in >> s.coeffs[k];
    in >> tag;
    for (auto& v : s.sigma2) in >> v;
    in >> tag;
    for (auto& c : s.cutoffs) {
        std::string cell;
        in >> cell;
        c = (cell == "-inf") ? Cutoff::none() : Cutoff::at(csv::parseDouble(cell, prefix));
    }
    long rows = 0, cols = 0;
    in >> tag >> rows >> cols;
    s.u.resize(rows, cols);
    for (long i = 0; i < rows; ++i)
        for (long c = 0; c < cols; ++c) in >> s.u(i, c);
    in >> tag >> rows >> cols;
    s.v.resize(rows, cols);
    for (long c = 0; c < rows; ++c)
        for (long i = 0; i < cols; ++i) in >> s.v(c, i);
    in >> tag;
    in >> s.rng.engine();
    if (!in) throw DataError("truncated checkpoint " + prefix);

    sampler.rebindState(s);
    const PosteriorChain partial = loadChain(prefix + ".draws.csv");
    return {std::move(s), partial.draws};
}

} // namespace ntumatch

#endif
