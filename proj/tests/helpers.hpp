#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "medcollab/datasets.hpp"
#include "medcollab/gateway.hpp"

namespace test_helpers {

inline std::filesystem::path repo_dir() { return MEDCOLLAB_REPO_DIR; }

inline std::filesystem::path fixture(const std::string& name) {
    return repo_dir() / "tests" / "fixtures" / name;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline medcollab::QuestionInstance medqa_instance(const std::string& gold = "C") {
    medcollab::QuestionInstance inst;
    inst.id = "medqa-demo-1";
    inst.dataset = "MedQA";
    inst.question = "A 3-year-old presents with fever and a barking cough. What is the most likely diagnosis?";
    inst.options = {{"A", "Epiglottitis"}, {"B", "Bronchiolitis"}, {"C", "Croup"}, {"D", "Pertussis"}};
    inst.gold = gold;
    return inst;
}

inline medcollab::QuestionInstance pubmedqa_instance() {
    medcollab::QuestionInstance inst;
    inst.id = "pubmedqa-demo-1";
    inst.dataset = "PubMedQA";
    inst.question = "Does the intervention reduce mortality?";
    inst.context = "A randomized trial of 200 patients showed a small reduction in mortality.";
    inst.options = {{"yes", "yes"}, {"no", "no"}, {"maybe", "maybe"}};
    inst.gold = "yes";
    return inst;
}

// Scripted happy path: 5 question domains, 2 option domains, per-domain analyses,
// one report, unanimous round-1 votes, answer C.
inline medcollab::MockScript happy_script() {
    medcollab::MockScript script;
    script.rules = {
        {"qd", "", "Medical Field: Pediatrics | Cardiology | Immunology | Oncology | Neurology", 0},
        {"od", "", "Medical Field: Pharmacology | Toxicology", 0},
        {"qa", "Pediatrics", "The pediatric presentation suggests a viral upper airway process.", 0},
        {"qa", "Cardiology", "No cardiac involvement is apparent from the vignette.", 0},
        {"qa", "Immunology", "The immune response pattern fits a common childhood infection.", 0},
        {"qa", "Oncology", "Nothing suggests a neoplastic process here.", 0},
        {"qa", "Neurology", "Neurological findings are absent.", 0},
        {"oa", "Pharmacology", "Option C is consistent with the pharmacological picture.", 0},
        {"oa", "Toxicology", "No toxic exposure supports the alternatives; option C stands.", 0},
        {"rs", "", "Key Knowledge: K0; Total Analysis: T0", 0},
        {"vote", "", "Vote: yes", 0},
        {"dm", "", "Answer: C", 0},
    };
    script.default_response = "Medical Field: General Medicine";
    return script;
}

inline medcollab::Gateway mock_gateway(medcollab::MockScript script) {
    medcollab::BackendConfig config;
    config.kind = medcollab::BackendKind::mock;
    return medcollab::Gateway(config, std::move(script));
}

}  // namespace test_helpers
