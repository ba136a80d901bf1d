// Command-line front end: market simulation, both estimators, stability and
// rank audits, counterfactual policies, model fit, and the Monte Carlo
// orchestrator. Every run directory gets the resolved config and seed so runs
// can be reproduced exactly.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <set>

#include "ntumatch/average_derivative.hpp"
#include "ntumatch/counterfactual.hpp"
#include "ntumatch/dgp.hpp"
#include "ntumatch/gibbs.hpp"
#include "ntumatch/io.hpp"
#include "ntumatch/model_fit.hpp"
#include "ntumatch/psrf.hpp"

namespace fs = std::filesystem;
using namespace ntumatch;

namespace {

const std::map<std::string, std::set<std::string>> kConfigKeys = {
    {"run", {"seed", "output_dir", "verbosity"}},
    {"dgp",
     {"model", "n_students", "capacities", "beta_d", "beta_s", "beta_z", "gamma_w", "gamma_m", "gamma_z",
      "y_mean", "y_var", "w_mean", "w_var", "s_mean", "s_var", "z_mean", "z_var", "m_mean", "m_var",
      "shock_scale", "estimate_scale_college"}},
    {"kernel",
     {"bandwidths", "bandwidth_scale", "trim_fraction", "model", "s_column", "z_column", "m_column",
      "reduced_y_college", "reduced_w_college", "condition_cutoff"}},
    {"gibbs",
     {"iterations", "burn_in", "chains", "thin", "prior_var", "sigma_prior_scale", "sigma_prior_dof",
      "audit_every", "init_jitter_sd", "checkpoint_every"}},
    {"counterfactual",
     {"n_draws", "blocks", "priority_flag", "scope", "ability_variable", "income_flag", "distance_coefficient"}},
    {"fit", {"n_sims", "student_variables", "school_attributes"}},
    {"audit", {"w_step"}},
    {"mc", {"samples", "method"}},
};

RunConfig loadConfig(const std::string& path) {
    RunConfig cfg = path.empty() ? RunConfig() : RunConfig::parse(path);
    cfg.validateKeys(kConfigKeys);
    return cfg;
}

DgpConfig dgpFromConfig(const RunConfig& cfg, std::uint64_t seed) {
    const std::string model = cfg.get("dgp", "model", "standard");
    DgpConfig d = model == "reduced" ? DgpConfig::reduced() : DgpConfig::standard();
    if (model != "standard" && model != "reduced") throw SchemaError("dgp.model must be standard|reduced");
    d.nStudents = static_cast<int>(cfg.getLong("dgp", "n_students", d.nStudents));
    if (cfg.has("dgp", "capacities")) {
        d.capacities.clear();
        for (double q : cfg.getDoubleList("dgp", "capacities", {})) d.capacities.push_back(static_cast<int>(q));
    }
    const int C = d.numColleges();
    auto vec = [&](const char* key, Vector v) {
        auto xs = cfg.getDoubleList("dgp", key, {});
        if (xs.empty()) {
            if (v.size() == C) return v;
            // model presets are sized for 3 colleges; resize uniform defaults
            return Vector(Vector::Constant(C, v.size() ? v[0] : 1.0));
        }
        if (static_cast<int>(xs.size()) != C) throw SchemaError(std::string("dgp.") + key + ": need one value per college");
        Vector out(C);
        for (int c = 0; c < C; ++c) out[c] = xs[c];
        return out;
    };
    d.betaD = vec("beta_d", d.betaD);
    d.betaS = vec("beta_s", d.betaS);
    d.betaZ = vec("beta_z", d.betaZ);
    d.gammaW = vec("gamma_w", d.gammaW);
    d.gammaM = vec("gamma_m", d.gammaM);
    d.gammaZ = vec("gamma_z", d.gammaZ);
    d.yDist = {cfg.getDouble("dgp", "y_mean", 0.0), cfg.getDouble("dgp", "y_var", 36.0)};
    d.wDist = {cfg.getDouble("dgp", "w_mean", 0.0), cfg.getDouble("dgp", "w_var", 36.0)};
    d.sDist = {cfg.getDouble("dgp", "s_mean", 5.0), cfg.getDouble("dgp", "s_var", 36.0)};
    d.zDist = {cfg.getDouble("dgp", "z_mean", 0.0), cfg.getDouble("dgp", "z_var", 36.0)};
    d.mDist = {cfg.getDouble("dgp", "m_mean", 0.0), cfg.getDouble("dgp", "m_var", 36.0)};
    if (cfg.has("dgp", "shock_scale")) d.shockScale = cfg.getDoubleList("dgp", "shock_scale", {});
    if (static_cast<int>(d.shockScale.size()) != C) d.shockScale.assign(C, 1.0);
    d.estimateScaleCollege = static_cast<int>(cfg.getLong("dgp", "estimate_scale_college", std::min(3, C)));
    d.seed = seed;
    return d;
}

AdeOptions adeFromConfig(const RunConfig& cfg) {
    AdeOptions o;
    o.kernel.bandwidths = cfg.getDoubleList("kernel", "bandwidths", {});
    o.kernel.bandwidthScale = cfg.getDouble("kernel", "bandwidth_scale", 1.0);
    o.kernel.trimFraction = cfg.getDouble("kernel", "trim_fraction", 0.05);
    const std::string model = cfg.get("kernel", "model", "general");
    if (model == "reduced")
        o.model = AdeModel::Reduced;
    else if (model != "general")
        throw SchemaError("kernel.model must be general|reduced");
    o.sColumn = static_cast<int>(cfg.getLong("kernel", "s_column", 0));
    o.zColumn = static_cast<int>(cfg.getLong("kernel", "z_column", 1));
    o.mColumn = static_cast<int>(cfg.getLong("kernel", "m_column", 2));
    o.reducedYCollege = static_cast<int>(cfg.getLong("kernel", "reduced_y_college", 1));
    o.reducedWCollege = static_cast<int>(cfg.getLong("kernel", "reduced_w_college", 3));
    o.conditionNumberCutoff = cfg.getDouble("kernel", "condition_cutoff", 1e8);
    return o;
}

GibbsConfig gibbsFromConfig(const RunConfig& cfg, std::uint64_t seed) {
    GibbsConfig g;
    g.iterations = static_cast<int>(cfg.getLong("gibbs", "iterations", 50000));
    g.burnIn = static_cast<int>(cfg.getLong("gibbs", "burn_in", 20000));
    g.chains = static_cast<int>(cfg.getLong("gibbs", "chains", 1));
    g.thin = static_cast<int>(cfg.getLong("gibbs", "thin", 1));
    g.priorVarScale = cfg.getDouble("gibbs", "prior_var", 100.0);
    g.sigmaPriorScale = cfg.getDouble("gibbs", "sigma_prior_scale", 1.0);
    g.sigmaPriorDof = cfg.getDouble("gibbs", "sigma_prior_dof", 2.0);
    g.auditEvery = static_cast<int>(cfg.getLong("gibbs", "audit_every", 0));
    g.initJitterSd = cfg.getDouble("gibbs", "init_jitter_sd", 0.3);
    g.seed = seed;
    return g;
}

void writeResolvedConfig(RunConfig cfg, std::uint64_t seed, const std::string& dir) {
    fs::create_directories(dir);
    cfg.set("run", "seed", std::to_string(seed));
    cfg.set("run", "output_dir", dir);
    cfg.write(dir + "/resolved_config.cfg");
}

void writeTruth(const SimulatedMarket& sim, const DgpConfig& d, const std::string& path) {
    csv::Writer w(path);
    w.row({"parameter", "value"});
    const auto names = EmpiricalSpec(sim.spec).coefficientNames();
    for (std::size_t k = 0; k < names.size(); ++k)
        w.row({names[k], csv::formatDouble(sim.trueCoefficients[static_cast<int>(k)])});
    for (const auto& g : sim.spec.shockScales)
        w.row({g.name, csv::formatDouble(d.shockScale[*g.scope.collegeIds.begin() - 1])});
}

void writeSummaryTable(const std::vector<std::string>& params, const std::vector<std::vector<double>>& perSample,
                       const std::string& path) {
    // rows: parameter, median, mean, sd over samples
    csv::Writer w(path);
    w.row({"parameter", "median", "mean", "std_dev"});
    for (std::size_t k = 0; k < params.size(); ++k) {
        std::vector<double> xs;
        for (const auto& row : perSample)
            if (k < row.size() && std::isfinite(row[k])) xs.push_back(row[k]);
        if (xs.empty()) {
            w.row({params[k], "nan", "nan", "nan"});
            continue;
        }
        w.row({params[k], csv::formatDouble(median(xs)), csv::formatDouble(mean(xs)),
               csv::formatDouble(xs.size() > 1 ? stddev(xs) : 0.0)});
    }
}

LoadedMarket loadMarketArgs(const std::string& students, const std::string& schools, const std::string& schema) {
    return loadMarket(students, schools, schema);
}

std::vector<std::string> semiParamNames(int C) {
    std::vector<std::string> names;
    for (int c = 1; c <= C; ++c) names.push_back("beta_s_" + std::to_string(c));
    for (int c = 1; c <= C; ++c) names.push_back("gamma_m_" + std::to_string(c));
    for (const char* variant : {"gmm", "rows_1_2", "rows_1_3", "rows_2_3"}) {
        names.push_back(std::string("gamma_z_") + variant);
        names.push_back(std::string("beta_z_") + variant);
    }
    return names;
}

std::vector<double> semiEstimateRow(const Market& market, const Matching& matching, const AdeOptions& opt) {
    const auto mats = averageDerivatives(market, matching, opt);
    const auto est = solveCoefficients(mats, opt);
    std::vector<double> row;
    for (int c = 0; c < est.betaS.size(); ++c) row.push_back(est.betaS[c]);
    for (int c = 0; c < est.gammaM.size(); ++c) row.push_back(est.gammaM[c]);
    row.push_back(est.gmm.gammaZ);
    row.push_back(est.gmm.betaZ);
    for (const auto& p : est.pairs) {
        row.push_back(p.gammaZ);
        row.push_back(p.betaZ);
    }
    return row;
}

int runSimulate(const std::string& configPath, std::uint64_t seed, const std::string& outDir) {
    RunConfig cfg = loadConfig(configPath);
    if (cfg.has("run", "seed") && seed == 0) seed = static_cast<std::uint64_t>(cfg.getLong("run", "seed", 0));
    const DgpConfig d = dgpFromConfig(cfg, seed);
    const SimulatedMarket sim = simulateMarket(d);
    writeResolvedConfig(cfg, seed, outDir);
    saveMarket(sim.market, sim.matching, outDir);
    saveCutoffs(sim.market, sim.matching.cutoffs, outDir + "/cutoffs.csv");
    saveUtilities(sim.market, sim.utilities, outDir + "/utilities.csv");
    saveSpec(sim.spec, outDir + "/spec.cfg");
    writeTruth(sim, d, outDir + "/truth.csv");
    if (sim.nonBindingWarning)
        std::cerr << "warning: at least one capacity constraint did not bind in this sample\n";
    std::cout << "simulated " << sim.market.numStudents() << " students, " << sim.market.numColleges()
              << " colleges -> " << outDir << "\n";
    return 0;
}

int runEstimateBayes(const std::string& configPath, std::uint64_t seed, const std::string& outDir,
                     const std::string& students, const std::string& schools, const std::string& schema,
                     const std::string& specPath, const std::string& resume) {
    RunConfig cfg = loadConfig(configPath);
    if (cfg.has("run", "seed") && seed == 0) seed = static_cast<std::uint64_t>(cfg.getLong("run", "seed", 0));
    const LoadedMarket data = loadMarketArgs(students, schools, schema);
    const EmpiricalSpec spec = loadSpec(specPath);
    GibbsConfig g = gibbsFromConfig(cfg, seed);
    writeResolvedConfig(cfg, seed, outDir);

    GibbsSampler sampler(data.market, data.observed, spec, g);
    const int checkpointEvery = static_cast<int>(cfg.getLong("gibbs", "checkpoint_every", 0));

    std::vector<PosteriorChain> chains(g.chains);
    if (!resume.empty()) {
        if (g.chains != 1) throw InvalidInput("resume supports a single chain");
        auto [state, draws] = loadCheckpoint(sampler, resume);
        chains[0] = sampler.runFrom(state, draws);
    } else if (checkpointEvery > 0 && g.chains == 1) {
        auto state = sampler.initState(0);
        Matrix draws(0, static_cast<int>(sampler.parameterNames().size()));
        while (state.sweepsDone < g.iterations) {
            GibbsConfig stage = g;
            stage.iterations = static_cast<int>(
                std::min<long>(g.iterations, state.sweepsDone + checkpointEvery));
            GibbsSampler staged(data.market, data.observed, spec, stage);
            PosteriorChain part = staged.runFrom(state, draws);
            draws = part.draws;
            saveCheckpoint(sampler, state, draws, outDir + "/checkpoint");
            chains[0] = part;
        }
    } else {
        chains = runChains(data.market, data.observed, spec, g);
    }

    for (int j = 0; j < g.chains; ++j)
        saveChain(chains[j], outDir + "/chain_" + std::to_string(j) + ".csv");

    csv::Writer rep(outDir + "/estimate_report.csv");
    const bool withPsrf = g.chains >= 2;
    PsrfResult pr;
    if (withPsrf) pr = psrf(chains);
    rep.row(withPsrf ? std::vector<std::string>{"parameter", "posterior_mean", "posterior_sd", "psrf"}
                     : std::vector<std::string>{"parameter", "posterior_mean", "posterior_sd"});
    const Vector mean = chains[0].posteriorMean();
    const Vector sd = chains[0].posteriorSd();
    for (std::size_t k = 0; k < chains[0].parameterNames.size(); ++k) {
        std::vector<std::string> row{chains[0].parameterNames[k], csv::formatDouble(mean[static_cast<int>(k)]),
                                     csv::formatDouble(sd[static_cast<int>(k)])};
        if (withPsrf) row.push_back(csv::formatDouble(pr.values[static_cast<int>(k)]));
        rep.row(row);
    }
    int violations = 0, checks = 0;
    for (const auto& c : chains) {
        violations += c.auditViolations;
        checks += c.auditChecks;
    }
    if (checks > 0)
        std::cout << "stability audits: " << violations << " violations in " << checks << " checks\n";
    std::cout << "wrote " << outDir << "/estimate_report.csv\n";
    return 0;
}

int runEstimateSemi(const std::string& configPath, const std::string& outDir, const std::string& students,
                    const std::string& schools, const std::string& schema) {
    RunConfig cfg = loadConfig(configPath);
    const LoadedMarket data = loadMarketArgs(students, schools, schema);
    const AdeOptions opt = adeFromConfig(cfg);
    writeResolvedConfig(cfg, 0, outDir);
    const auto names = semiParamNames(data.market.numColleges());
    const auto row = semiEstimateRow(data.market, data.observed, opt);
    csv::Writer w(outDir + "/semi_report.csv");
    w.row({"parameter", "estimate"});
    for (std::size_t k = 0; k < names.size(); ++k) w.row({names[k], csv::formatDouble(row[k])});
    std::cout << "wrote " << outDir << "/semi_report.csv\n";
    return 0;
}

int runAudit(const std::string& configPath, const std::string& outDir, const std::string& students,
             const std::string& schools, const std::string& schema, const std::string& utilitiesPath) {
    RunConfig cfg = loadConfig(configPath);
    const LoadedMarket data = loadMarketArgs(students, schools, schema);
    const LatentUtilities util = loadUtilities(data.market, utilitiesPath);
    Matching matching = data.observed;
    matching.cutoffs = computeCutoffs(matching.assignment, util, data.market);
    const StabilityReport rep = auditStability(data.market, util, matching);
    fs::create_directories(outDir);
    writeResolvedConfig(cfg, 0, outDir);
    {
        csv::Writer w(outDir + "/audit.csv");
        w.row({"student_id", "college_id", "kind", "displaced_id"});
        for (const auto& b : rep.blockingPairs)
            w.row({std::to_string(b.studentId), std::to_string(b.collegeId),
                   b.excessCapacity ? "excess_capacity" : "displaces", std::to_string(b.displacedId)});
        for (int id : rep.irViolations) w.row({std::to_string(id), "0", "ir_violation", "0"});
    }

    // Rank diagnostic at the sample medians; the two supply-shifter points are
    // the median and median + w_step * sd.
    AdeOptions opt = adeFromConfig(cfg);
    const double step = cfg.getDouble("audit", "w_step", 1.0);
    const Market& m = data.market;
    const int C = m.numColleges();
    Vector zPoint(m.zDim()), yPoint(C), w1(C), w2(C);
    for (int k = 0; k < m.zDim(); ++k) {
        std::vector<double> xs(m.numStudents());
        for (int i = 0; i < m.numStudents(); ++i) xs[i] = m.students[i].z[k];
        zPoint[k] = median(xs);
    }
    for (int c = 0; c < C; ++c) {
        std::vector<double> ys(m.numStudents()), ws(m.numStudents());
        for (int i = 0; i < m.numStudents(); ++i) {
            ys[i] = m.students[i].y[c];
            ws[i] = m.students[i].w[c];
        }
        yPoint[c] = median(ys);
        w1[c] = median(ws);
        w2[c] = w1[c] + step * stddev(ws);
    }
    const RankReport rank = rankCondition(m, matching, zPoint, yPoint, w1, w2, opt);
    {
        csv::Writer w(outDir + "/rank_report.csv");
        w.row({"singular_value_index", "value"});
        for (int k = 0; k < rank.singularValues.size(); ++k)
            w.row({std::to_string(k), csv::formatDouble(rank.singularValues[k])});
        w.row({"condition_number", csv::formatDouble(rank.conditionNumber)});
        w.row({"passes", rank.passes ? "1" : "0"});
    }
    std::cout << rep.blockingPairs.size() << " blocking pairs, " << rep.irViolations.size()
              << " IR violations; rank condition " << (rank.passes ? "passes" : "fails")
              << " (condition number " << rank.conditionNumber << ")\n";
    return rep.stable() ? 0 : 3;
}

int runCounterfactual(const std::string& configPath, std::uint64_t seed, const std::string& outDir,
                      const std::string& students, const std::string& schools, const std::string& schema,
                      const std::string& specPath, const std::string& chainPath) {
    RunConfig cfg = loadConfig(configPath);
    if (cfg.has("run", "seed") && seed == 0) seed = static_cast<std::uint64_t>(cfg.getLong("run", "seed", 0));
    const LoadedMarket data = loadMarketArgs(students, schools, schema);
    const EmpiricalSpec spec = loadSpec(specPath);
    const PosteriorChain chain = loadChain(chainPath);

    PriorityPolicy policy;
    policy.priorityFlag = cfg.get("counterfactual", "priority_flag", "low_income");
    const std::string scope = cfg.get("counterfactual", "scope", "all");
    policy.scope = parseScope(scope, "counterfactual.scope");

    CounterfactualOptions opt;
    opt.nDraws = static_cast<int>(cfg.getLong("counterfactual", "n_draws", std::min(1500, chain.numKept())));
    opt.blocks = static_cast<int>(cfg.getLong("counterfactual", "blocks", 15));
    opt.seed = seed;
    opt.abilityVariable = cfg.get("counterfactual", "ability_variable", "");
    opt.incomeFlag = cfg.get("counterfactual", "income_flag", "low_income");
    opt.distanceCoefficient = cfg.get("counterfactual", "distance_coefficient", "");

    const CounterfactualReport rep =
        simulateCounterfactual(data.market, spec, chain, policy, data.observed, opt);
    writeResolvedConfig(cfg, seed, outDir);
    csv::Writer w(outDir + "/counterfactual.csv");
    w.row({"statistic", "group", "current", "counterfactual", "sd"});
    w.row({"sorting_ability", "all", csv::formatDouble(rep.sortingAbilityObserved),
           csv::formatDouble(rep.sortingAbilityPolicy), csv::formatDouble(rep.sortingAbilityPolicySd)});
    w.row({"sorting_income", "all", csv::formatDouble(rep.sortingIncomeObserved),
           csv::formatDouble(rep.sortingIncomePolicy), csv::formatDouble(rep.sortingIncomePolicySd)});
    for (const auto& g : rep.groups) {
        w.row({"utility_change_km", g.name, "0", csv::formatDouble(g.meanKm), csv::formatDouble(g.meanKmSd)});
        w.row({"winners", g.name, "0", csv::formatDouble(g.winners), ""});
        w.row({"losers", g.name, "0", csv::formatDouble(g.losers), ""});
        w.row({"indifferent", g.name, "1", csv::formatDouble(g.indifferent), ""});
        for (std::size_t t = 0; t < rep.enrollmentColumns.size(); ++t)
            w.row({"enrollment_" + rep.enrollmentColumns[t], g.name,
                   csv::formatDouble(g.enrollObserved[static_cast<int>(t)]),
                   csv::formatDouble(g.enrollPolicy[static_cast<int>(t)]), ""});
    }
    std::cout << "wrote " << outDir << "/counterfactual.csv (" << rep.drawsUsed << " draws)\n";
    return 0;
}

int runFit(const std::string& configPath, std::uint64_t seed, const std::string& outDir,
           const std::string& students, const std::string& schools, const std::string& schema,
           const std::string& specPath, const std::string& chainPath) {
    RunConfig cfg = loadConfig(configPath);
    if (cfg.has("run", "seed") && seed == 0) seed = static_cast<std::uint64_t>(cfg.getLong("run", "seed", 0));
    const LoadedMarket data = loadMarketArgs(students, schools, schema);
    const EmpiricalSpec spec = loadSpec(specPath);
    const PosteriorChain chain = loadChain(chainPath);
    const int nSims = static_cast<int>(cfg.getLong("fit", "n_sims", 100));

    const CompiledDesign design = compileDesign(spec, data.market);
    const Vector meanRow = chain.posteriorMean();
    const Vector coeffs = meanRow.head(design.numCoefficients());
    std::vector<double> scales = design.scaleValues;
    {
        int extra = design.numCoefficients();
        for (std::size_t g = 0; g < design.scaleNames.size(); ++g)
            if (design.scaleEstimated[g] && extra < meanRow.size()) scales[g] = meanRow[extra++];
    }

    std::vector<Matching> modelSims(nSims);
    auto master = RngStream::from_master(seed);
    parallel_for(nSims, [&](int s) {
        auto rng = master.substream("fit-sim", static_cast<std::uint64_t>(s));
        const LatentUtilities shocks = drawShocks(data.market, rng);
        const LatentUtilities util = buildUtilities(design, data.market, coeffs, shocks, &scales);
        modelSims[s] = deferredAcceptance(data.market, util);
    });
    const std::vector<Matching> randomSims = randomBenchmark(data.market, nSims, seed + 1);

    const auto studentVars = cfg.getStringList("fit", "student_variables");
    const auto schoolAttrs = cfg.getStringList("fit", "school_attributes");
    const FitReport model = predictionRates(modelSims, data.observed, data.market);
    const FitReport random = predictionRates(randomSims, data.observed, data.market);
    const FitReport modelRmse = rmsePanels(modelSims, data.observed, data.market, studentVars, schoolAttrs);
    const FitReport randomRmse = rmsePanels(randomSims, data.observed, data.market, studentVars, schoolAttrs);

    writeResolvedConfig(cfg, seed, outDir);
    csv::Writer w(outDir + "/fit.csv");
    w.row({"statistic", "model", "random"});
    w.row({"pct_correct_school", csv::formatDouble(model.pctCorrectSchool), csv::formatDouble(random.pctCorrectSchool)});
    w.row({"pct_correct_type", csv::formatDouble(model.pctCorrectType), csv::formatDouble(random.pctCorrectType)});
    w.row({"pct_correct_binding", csv::formatDouble(model.pctCorrectBinding),
           csv::formatDouble(random.pctCorrectBinding)});
    for (std::size_t k = 0; k < modelRmse.schoolPanel.size(); ++k)
        w.row({"rmse_school_panel_" + modelRmse.schoolPanel[k].name,
               csv::formatDouble(modelRmse.schoolPanel[k].rmse), csv::formatDouble(randomRmse.schoolPanel[k].rmse)});
    for (std::size_t k = 0; k < modelRmse.studentPanel.size(); ++k)
        w.row({"rmse_student_panel_" + modelRmse.studentPanel[k].name,
               csv::formatDouble(modelRmse.studentPanel[k].rmse), csv::formatDouble(randomRmse.studentPanel[k].rmse)});
    std::cout << "wrote " << outDir << "/fit.csv\n";
    return 0;
}

int runMc(const std::string& configPath, std::uint64_t seed, const std::string& outDir, int samplesArg,
          long iterationsArg, const std::string& methodArg) {
    RunConfig cfg = loadConfig(configPath);
    if (cfg.has("run", "seed") && seed == 0) seed = static_cast<std::uint64_t>(cfg.getLong("run", "seed", 0));
    const int samples = samplesArg > 0 ? samplesArg : static_cast<int>(cfg.getLong("mc", "samples", 150));
    std::string method = !methodArg.empty() ? methodArg : cfg.get("mc", "method", "both");
    if (method != "bayes" && method != "semi" && method != "both")
        throw SchemaError("mc.method must be bayes|semi|both");
    writeResolvedConfig(cfg, seed, outDir);

    const DgpConfig base = dgpFromConfig(cfg, seed);
    GibbsConfig g = gibbsFromConfig(cfg, seed);
    if (iterationsArg > 0) {
        g.iterations = static_cast<int>(iterationsArg);
        g.burnIn = static_cast<int>(iterationsArg * 2 / 5);
    }
    const AdeOptions ade = adeFromConfig(cfg);

    std::vector<std::vector<double>> bayesRows(samples), semiRows(samples);
    std::vector<std::string> bayesNames, semiNames;
    {
        DgpConfig probe = base;
        probe.seed = splitmix64(seed);
        auto sim = simulateMarket(probe);
        bayesNames = GibbsSampler(sim.market, sim.matching, sim.spec, g).parameterNames();
        semiNames = semiParamNames(sim.market.numColleges());
    }

    parallel_for(samples, [&](int s) {
        DgpConfig d = base;
        d.seed = splitmix64(seed + static_cast<std::uint64_t>(s) + 1);
        const SimulatedMarket sim = simulateMarket(d);
        if (method != "semi") {
            GibbsConfig gc = g;
            gc.seed = d.seed ^ 0x9e37ULL;
            const PosteriorChain chain = runChain(sim.market, sim.matching, sim.spec, gc);
            const Vector m = chain.posteriorMean();
            bayesRows[s].assign(m.data(), m.data() + m.size());
        }
        if (method != "bayes") semiRows[s] = semiEstimateRow(sim.market, sim.matching, ade);
    });

    if (method != "semi") {
        csv::Writer w(outDir + "/mc_bayes_samples.csv");
        std::vector<std::string> header{"sample"};
        for (const auto& nme : bayesNames) header.push_back(nme);
        w.row(header);
        for (int s = 0; s < samples; ++s) {
            std::vector<std::string> row{std::to_string(s)};
            for (double x : bayesRows[s]) row.push_back(csv::formatDouble(x));
            w.row(row);
        }
        writeSummaryTable(bayesNames, bayesRows, outDir + "/mc_bayes_summary.csv");
    }
    if (method != "bayes") {
        csv::Writer w(outDir + "/mc_semi_samples.csv");
        std::vector<std::string> header{"sample"};
        for (const auto& nme : semiNames) header.push_back(nme);
        w.row(header);
        for (int s = 0; s < samples; ++s) {
            std::vector<std::string> row{std::to_string(s)};
            for (double x : semiRows[s]) row.push_back(csv::formatDouble(x));
            w.row(row);
        }
        writeSummaryTable(semiNames, semiRows, outDir + "/mc_semi_summary.csv");
    }
    std::cout << "wrote Monte Carlo summaries for " << samples << " samples to " << outDir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ntumatch: simulation and estimation for matching markets without transfers"};
    app.require_subcommand(1);

    std::string configPath, outDir = "out";
    std::string students, schools, schema, specPath, chainPath, utilitiesPath, resume, method;
    std::uint64_t seed = 0;
    int samples = 0;
    long iterations = 0;

    auto addData = [&](CLI::App* sub) {
        sub->add_option("--students", students, "students.csv")->required();
        sub->add_option("--schools", schools, "schools.csv")->required();
        sub->add_option("--schema", schema, "schema.cfg sidecar")->required();
    };

    auto* sim = app.add_subcommand("simulate", "generate a synthetic market");
    sim->add_option("--config", configPath, "run config file");
    sim->add_option("--seed", seed, "master seed");
    sim->add_option("--out", outDir, "output directory");

    auto* eb = app.add_subcommand("estimate-bayes", "Gibbs-sampler estimation");
    eb->add_option("--config", configPath, "run config file");
    eb->add_option("--seed", seed, "master seed");
    eb->add_option("--out", outDir, "output directory");
    addData(eb);
    eb->add_option("--spec", specPath, "utility spec file")->required();
    eb->add_option("--resume", resume, "checkpoint prefix to resume from");

    auto* es = app.add_subcommand("estimate-semi", "average-derivative estimation");
    es->add_option("--config", configPath, "run config file");
    es->add_option("--out", outDir, "output directory");
    addData(es);

    auto* au = app.add_subcommand("audit", "stability and rank-condition audit");
    au->add_option("--config", configPath, "run config file");
    au->add_option("--out", outDir, "output directory");
    addData(au);
    au->add_option("--utilities", utilitiesPath, "utilities.csv")->required();

    auto* cf = app.add_subcommand("counterfactual", "priority-policy simulation");
    cf->add_option("--config", configPath, "run config file");
    cf->add_option("--seed", seed, "master seed");
    cf->add_option("--out", outDir, "output directory");
    addData(cf);
    cf->add_option("--spec", specPath, "utility spec file")->required();
    cf->add_option("--chain", chainPath, "posterior chain csv")->required();

    auto* ft = app.add_subcommand("fit", "model-fit diagnostics");
    ft->add_option("--config", configPath, "run config file");
    ft->add_option("--seed", seed, "master seed");
    ft->add_option("--out", outDir, "output directory");
    addData(ft);
    ft->add_option("--spec", specPath, "utility spec file")->required();
    ft->add_option("--chain", chainPath, "posterior chain csv")->required();

    auto* mc = app.add_subcommand("mc", "Monte Carlo study across simulated samples");
    mc->add_option("--config", configPath, "run config file");
    mc->add_option("--seed", seed, "master seed");
    mc->add_option("--out", outDir, "output directory");
    mc->add_option("--samples", samples, "number of samples");
    mc->add_option("--iterations", iterations, "Gibbs iterations per sample");
    mc->add_option("--method", method, "bayes|semi|both");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return runSimulate(configPath, seed, outDir);
        if (eb->parsed()) return runEstimateBayes(configPath, seed, outDir, students, schools, schema, specPath, resume);
        if (es->parsed()) return runEstimateSemi(configPath, outDir, students, schools, schema);
        if (au->parsed()) return runAudit(configPath, outDir, students, schools, schema, utilitiesPath);
        if (cf->parsed()) return runCounterfactual(configPath, seed, outDir, students, schools, schema, specPath, chainPath);
        if (ft->parsed()) return runFit(configPath, seed, outDir, students, schools, schema, specPath, chainPath);
        if (mc->parsed()) return runMc(configPath, seed, outDir, samples, iterations, method);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
