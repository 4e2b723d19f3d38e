// fnr: train / evaluate / ablate / gradcheck / export-roc over embedding
// datasets (precomputed encoder dumps or synthetic generators).

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fnr/checkpoint.hpp"
#include "fnr/config.hpp"
#include "fnr/model_gradcheck.hpp"
#include "fnr/trainer.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::string mode;
  std::string out;
  std::uint64_t seed = 0;
  bool has_seed = false;
};

fnr::RunConfig resolve_config(const Overrides& ov) {
  fnr::RunConfig rc = fnr::load_config(ov.config_path);
  if (!ov.mode.empty()) rc.mode = ov.mode;
  if (!ov.out.empty()) rc.out = ov.out;
  if (ov.has_seed) rc.seed = ov.seed;
  fnr::mode_from_name(rc.mode);  // validate early
  return rc;
}

void add_common(CLI::App* cmd, Overrides& ov, bool need_config) {
  auto* opt = cmd->add_option("--config", ov.config_path, "run config file");
  if (need_config) opt->required();
  cmd->add_option("--mode", ov.mode,
                  "text_only|image_only|fused_ws|fused_s (overrides config)");
  cmd->add_option("--out", ov.out, "output directory (overrides config)");
  cmd->add_option("--seed", ov.seed, "seed (overrides config)")
      ->each([&](const std::string&) { ov.has_seed = true; });
}

int cmd_train(const Overrides& ov) {
  fnr::RunConfig rc = resolve_config(ov);
  fnr::Dataset ds = fnr::resolve_dataset(rc.dataset);
  auto outcome = fnr::train(rc, ds);
  fnr::write_run_outputs(rc.out, rc, outcome);
  std::cout << "trained mode " << rc.mode << " on " << ds.meta.name << " ("
            << ds.meta.total() << " records), best epoch "
            << outcome.best_epoch << ", alpha "
            << outcome.class_weights.alpha << "\n"
            << fnr::report_to_text(outcome.test_report)
            << "outputs in " << rc.out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& dataset,
                 const std::string& out) {
  auto model = fnr::load_checkpoint(checkpoint);
  fnr::Dataset ds = fnr::resolve_dataset(dataset);
  auto test = fnr::split_records(ds, fnr::Split::kTest);
  auto report = fnr::evaluate_model(model, test, 256);
  std::cout << fnr::report_to_text(report);
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream os(std::filesystem::path(out) / "eval_report.json");
    os << fnr::report_to_json(report).dump(2) << "\n";
    std::ofstream ot(std::filesystem::path(out) / "eval_report.txt");
    ot << fnr::report_to_text(report);
  }
  return 0;
}

int cmd_export_roc(const std::string& checkpoint, const std::string& dataset,
                   const std::string& out_csv) {
  auto model = fnr::load_checkpoint(checkpoint);
  fnr::Dataset ds = fnr::resolve_dataset(dataset);
  auto test = fnr::split_records(ds, fnr::Split::kTest);
  auto report = fnr::evaluate_model(model, test, 256);
  fnr::write_roc_csv(report.roc, out_csv);
  std::cout << "wrote " << report.roc.size() << " ROC points to " << out_csv
            << " (AUC " << std::setprecision(6) << report.auc << ")\n";
  return 0;
}

int cmd_ablate(const Overrides& ov) {
  fnr::RunConfig rc = resolve_config(ov);
  fnr::Dataset ds = fnr::resolve_dataset(rc.dataset);
  const char* modes[] = {"text_only", "image_only", "fused_ws", "fused_s"};
  nlohmann::json table = nlohmann::json::array();
  std::ostringstream text;
  text << std::fixed << std::setprecision(4);
  text << std::left << std::setw(12) << "mode" << std::setw(10) << "accuracy"
       << std::setw(10) << "auc" << std::setw(10) << "micro_f1"
       << std::setw(10) << "fake_f1" << std::setw(10) << "real_f1" << "\n";
  std::filesystem::create_directories(rc.out);
  for (const char* mode : modes) {
    fnr::RunConfig mrc = rc;
    mrc.mode = mode;
    mrc.out = (std::filesystem::path(rc.out) / mode).string();
    auto outcome = fnr::train(mrc, ds);
    fnr::write_run_outputs(mrc.out, mrc, outcome);
    const auto& r = outcome.test_report;
    nlohmann::json row = fnr::report_to_json(r);
    row["mode"] = mode;
    table.push_back(row);
    text << std::left << std::setw(12) << mode << std::setw(10) << r.accuracy
         << std::setw(10) << r.auc << std::setw(10) << r.micro_f1
         << std::setw(10) << r.fake.f1 << std::setw(10) << r.real.f1 << "\n";
  }
  {
    std::ofstream os(std::filesystem::path(rc.out) / "ablation.json");
    os << table.dump(2) << "\n";
  }
  {
    std::ofstream os(std::filesystem::path(rc.out) / "ablation.txt");
    os << text.str();
  }
  std::cout << text.str() << "outputs in " << rc.out << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& fault_param) {
  auto report = fnr::model_gradcheck(4, 8, 3, 3, 2024, 1e-6L, 1e-5L,
                                     fault_param);
  std::cout << std::scientific << std::setprecision(3);
  // worst relative error per parameter group
  long double worst_proj = 0, worst_cls = 0;
  for (const auto& p : report.per_param) {
    bool is_cls = p.name.rfind("cls.", 0) == 0;
    (is_cls ? worst_cls : worst_proj) =
        std::max(is_cls ? worst_cls : worst_proj, p.rel_err);
  }
  std::cout << "projector group worst rel err: " << double(worst_proj) << "\n";
  std::cout << "classifier group worst rel err: " << double(worst_cls) << "\n";
  if (report.passed()) {
    std::cout << "gradcheck PASS (worst " << double(report.worst.rel_err)
              << " at " << report.worst.name << "[" << report.worst.index
              << "], tol " << double(report.tol) << ")\n";
    return 0;
  }
  std::cout << "gradcheck FAIL\n";
  for (const auto& p : report.per_param)
    if (p.rel_err >= report.tol)
      std::cout << "  " << p.name << "[" << p.index
                << "]: analytic " << double(p.analytic) << " numeric "
                << double(p.numeric) << " rel err " << double(p.rel_err)
                << "\n";
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fake-news fusion head: training and evaluation over "
               "precomputed embedding datasets"};
  app.require_subcommand(1);

  Overrides train_ov, ablate_ov;
  add_common(app.add_subcommand("train", "train one mode and evaluate on the "
                                         "test split"),
             train_ov, true);
  add_common(app.add_subcommand("ablate", "train all four modes with a shared "
                                          "seed and emit one table"),
             ablate_ov, true);

  std::string eval_ckpt, eval_data, eval_out;
  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on a "
                                              "dataset's test split");
  eval->add_option("checkpoint", eval_ckpt)->required();
  eval->add_option("dataset", eval_data)->required();
  eval->add_option("--out", eval_out, "directory for report files");

  std::string roc_ckpt, roc_data, roc_out = "roc.csv";
  auto* roc = app.add_subcommand("export-roc", "write the ROC polyline as "
                                               "fpr,tpr CSV");
  roc->add_option("checkpoint", roc_ckpt)->required();
  roc->add_option("dataset", roc_data)->required();
  roc->add_option("--out", roc_out, "output CSV path");

  std::string fault_param;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the "
                                             "full loss on a tiny fixture");
  gc->add_option("--inject-fault", fault_param,
                 "perturb this parameter's analytic gradient by +10%")
      ->group("");  // hidden, test hook

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("train")) return cmd_train(train_ov);
    if (app.got_subcommand("ablate")) return cmd_ablate(ablate_ov);
    if (app.got_subcommand("evaluate"))
      return cmd_evaluate(eval_ckpt, eval_data, eval_out);
    if (app.got_subcommand("export-roc"))
      return cmd_export_roc(roc_ckpt, roc_data, roc_out);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(fault_param);
  } catch (const fnr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const fnr::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const fnr::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const fnr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
