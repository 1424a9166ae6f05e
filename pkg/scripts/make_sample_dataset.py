#!/usr/bin/env python3
"""Regenerate the bundled sample question set and demo corpus.

The question set covers six cognitive-demand classes with a deliberate
skew toward simple recall (48 of 102 questions), mirroring the mix of
questions a sustainability chatbot actually receives.  Entities are
fictional companies so the texts assert nothing about real firms.

Outputs (committed, so runs must stay deterministic):
    src/ragwatt/data/questions.csv
    src/ragwatt/data/corpus.jsonl
"""

import csv
import json
from pathlib import Path

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "ragwatt" / "data"

COMPANIES = [
    "Northwind Logistics",
    "Bluefield Energy",
    "Cascadia Foods",
    "Meridian Steel",
    "Atlas Cement",
    "Polaris Airlines",
    "Verdant Retail",
    "Halcyon Chemicals",
    "Orion Shipping",
    "Sunforge Solar",
    "Tidewater Ports",
    "Granite Telecom",
    "Lumen Dairy",
    "Cobalt Mining Group",
    "Aurora Breweries",
    "Vantage Textiles",
]

COUNTRIES = [
    "the Netherlands",
    "Germany",
    "France",
    "Denmark",
    "Spain",
    "Japan",
    "Brazil",
    "Canada",
]

ABBREVIATIONS = [
    "NDC",
    "GHG",
    "ETS",
    "PUE",
    "CBAM",
    "SBTi",
    "LULUCF",
    "MRV",
]

COMPREHENSION = [
    "Explain in plain terms what reaching net zero means for a company.",
    "What is the difference between carbon neutrality and net zero?",
    "Explain what scope 2 emissions cover and why they are reported separately.",
    "What does it mean for a carbon offset to be additional?",
    "Explain the idea of a national carbon budget in simple terms.",
    "What is the difference between absolute and intensity-based emission targets?",
    "Explain how an emissions trading system puts a price on carbon.",
    "What does double counting of emission reductions mean?",
    "Explain why residual emissions remain even under an ambitious climate plan.",
    "What is carbon leakage and when does it occur?",
    "Explain what makes a corporate climate target science-based.",
]

APPLICATION = [
    "How should a mid-size retailer start accounting for its scope 3 emissions?",
    "How can a shipping firm apply an internal carbon price when choosing new vessels?",
    "How would a dairy cooperative use emission factors to report farm-level methane?",
    "How can a city apply the avoid-shift-improve framework to transport planning?",
    "How should a data center operator use its PUE figure when buying renewable power?",
    "How can a cement producer apply clinker substitution to cut process emissions?",
    "How would a brewery use heat recovery to reduce its scope 1 footprint?",
    "How should an airline apply sustainable aviation fuel credits in its reporting?",
    "How can a textile firm use supplier scorecards to manage upstream emissions?",
    "How would a port authority apply shore power to cut emissions from berthed ships?",
    "How should a telecom operator treat leased network sites in its inventory?",
]

ANALYSIS = [
    "Compare absolute emission caps with intensity targets for a growing steel firm.",
    "What are the main drivers behind rising supply-chain emissions in retail?",
    "Break down which parts of a shipping company's footprint an offset scheme cannot cover.",
    "Compare the strengths of project-based offsets and direct air capture removals.",
    "What distinguishes a transition plan that relies on offsets from one built on cuts?",
    "Analyse why scope 3 categories dominate the footprint of a food producer.",
    "Compare how an ETS and a carbon tax distribute abatement costs across sectors.",
    "What are the trade-offs between early retirement of assets and retrofitting them?",
    "Break down how renewable certificates change a reported scope 2 figure.",
    "Analyse the risks of banking on future removal technologies in a pledge.",
    "Compare national climate plans that price carbon with ones that regulate directly.",
]

EVALUATION = [
    "How credible is a corporate net zero pledge that leans mostly on offsets?",
    "Is a 2050 net zero date ambitious enough for a European energy utility?",
    "Judge whether intensity-only targets are adequate for a fast-growing airline.",
    "How convincing is a climate plan that excludes leased assets from its scope?",
    "Assess whether biomass co-firing is a sound decarbonisation step for a utility.",
    "Evaluate the use of avoided-emission claims in product marketing.",
    "Is it reasonable for a small supplier to rely on industry-average emission factors?",
    "Judge the merits of buying unbundled renewable certificates versus on-site solar.",
    "How should regulators weigh offset quality when approving transition plans?",
    "Assess whether quarterly emission reporting adds value over annual reporting.",
    "Evaluate the claim that efficiency gains alone can deliver a 2030 target.",
]

CREATION = [
    "Draft a three-step plan for a city to halve transport emissions by 2035.",
    "Design a supplier engagement programme for a retailer tackling scope 3 emissions.",
    "Propose a monitoring scheme for methane leaks at a mid-size gas distributor.",
    "Outline a credible offset purchasing policy for a company with residual emissions.",
    "Design an internal carbon pricing scheme for a multinational manufacturer.",
    "Propose a roadmap for a port to offer shore power at all berths within a decade.",
    "Draft the key clauses of a green power purchase agreement for a data center.",
    "Design a pilot for low-carbon cement procurement in public construction.",
    "Propose a scheme to reward employees for verified commuting emission cuts.",
    "Outline a plan to phase out fossil boilers across a university campus by 2032.",
]


def build_questions():
    rows = []

    def add(text, bloom, tags):
        rows.append({"text": text, "bloom_class": bloom, "tags": tags})

    # Knowledge: 16 + 8 + 8 + 8 + 8 = 48 recall questions
    for company in COMPANIES:
        add(
            f"Has {company} made a public climate pledge?",
            "Knowledge",
            ["corporate", "pledges"],
        )
    for company in COMPANIES[:8]:
        add(
            f"What year has {company} set for reaching net zero emissions?",
            "Knowledge",
            ["corporate", "targets"],
        )
    for abbr in ABBREVIATIONS:
        add(
            f"What does the abbreviation {abbr} stand for?",
            "Knowledge",
            ["glossary"],
        )
    for country in COUNTRIES:
        add(
            f"When did {country} submit its most recent national climate plan?",
            "Knowledge",
            ["policy", "national-plans"],
        )
    for country in COUNTRIES:
        add(
            f"What is the headline emissions reduction target in {country}'s current climate plan?",
            "Knowledge",
            ["policy", "targets"],
        )

    for text in COMPREHENSION:
        add(text, "Comprehension", ["concepts"])
    for text in APPLICATION:
        add(text, "Application", ["practice"])
    for text in ANALYSIS:
        add(text, "Analysis", ["reasoning"])
    for text in EVALUATION:
        add(text, "Evaluation", ["judgement"])
    for text in CREATION:
        add(text, "Creation", ["design"])

    return rows


GLOSSARY_CHUNKS = [
    (
        "glossary-handbook",
        1,
        "Net zero means cutting greenhouse gas emissions as close to zero as "
        "possible and balancing the small remainder with durable removals. "
        "A net zero pledge therefore combines deep reductions with a plan for "
        "residual emissions.",
    ),
    (
        "glossary-handbook",
        2,
        "Carbon neutrality is a weaker claim than net zero: it allows a company "
        "to balance today's emissions with offsets of any kind, without a "
        "commitment to reduce them first.",
    ),
    (
        "glossary-handbook",
        3,
        "Scope 1 covers direct emissions from owned sources, scope 2 covers "
        "purchased electricity and heat, and scope 3 covers all other value "
        "chain emissions. Scope 3 usually dominates for retail and food firms.",
    ),
    (
        "glossary-handbook",
        4,
        "An offset is additional only if the underlying project would not have "
        "happened without the carbon revenue. Additionality is the hardest "
        "quality criterion to verify in practice.",
    ),
    (
        "glossary-handbook",
        5,
        "NDC stands for nationally determined contribution, the climate plan "
        "each country files under the Paris Agreement and updates every five "
        "years.",
    ),
    (
        "glossary-handbook",
        6,
        "An emissions trading system, or ETS, caps total emissions and lets "
        "firms trade allowances, so the market discovers the carbon price. "
        "A carbon tax fixes the price instead and lets quantities adjust.",
    ),
    (
        "glossary-handbook",
        7,
        "PUE, power usage effectiveness, is the ratio of total facility energy "
        "to IT energy in a data center. A PUE of 1.1 means ten percent overhead "
        "for cooling and power delivery.",
    ),
    (
        "glossary-handbook",
        8,
        "A carbon budget is the cumulative amount of carbon dioxide that can "
        "still be emitted while keeping warming below a chosen limit. Annual "
        "targets are derived by spreading the budget over time.",
    ),
]

PLEDGE_CHUNKS = [
    ("pledge-register", 1, "Northwind Logistics pledges net zero across its fleet by 2040, with an interim 45 percent cut in scope 1 emissions by 2030 against a 2020 baseline."),
    ("pledge-register", 2, "Bluefield Energy targets net zero by 2045 and has committed to exit coal generation by 2030; the plan relies on wind build-out rather than offsets."),
    ("pledge-register", 3, "Cascadia Foods aims for a 50 percent reduction in farm-to-shelf emissions by 2032 and reports scope 3 in full, including land use change."),
    ("pledge-register", 4, "Meridian Steel has set a 2050 net zero date conditional on hydrogen availability, with an intensity target of 1.2 tonnes of CO2 per tonne of steel by 2030."),
    ("pledge-register", 5, "Atlas Cement commits to cutting clinker share to 60 percent by 2030 and to capture half of its process emissions by 2040."),
    ("pledge-register", 6, "Polaris Airlines pledges carbon-neutral growth from 2026 using sustainable aviation fuel and high-durability removals, reaching net zero by 2050."),
    ("pledge-register", 7, "Verdant Retail targets net zero stores by 2035 and requires its top 100 suppliers to set science-based targets by 2027."),
    ("pledge-register", 8, "Orion Shipping will halve voyage emissions per tonne-mile by 2033 and has ordered six methanol-ready vessels as a first step."),
    ("pledge-register", 9, "Granite Telecom pledges net zero operations by 2038, moving all network sites to renewable power purchase agreements by 2028."),
    ("pledge-register", 10, "Aurora Breweries aims for fossil-free brewing by 2034 through heat recovery and biogas, and reports progress quarterly."),
]

POLICY_CHUNKS = [
    ("national-plans-digest", 1, "The Netherlands filed its updated national plan in 2023, targeting a 55 percent emissions cut by 2030 relative to 1990 and climate neutrality by 2050."),
    ("national-plans-digest", 2, "Germany's current plan sets a 65 percent reduction by 2030 against 1990 levels, with sector budgets enforced by federal law."),
    ("national-plans-digest", 3, "Denmark targets a 70 percent cut by 2030, one of the steepest pledges filed, supported by a binding climate act."),
    ("national-plans-digest", 4, "Japan's plan commits to a 46 percent reduction by 2030 from 2013 levels and carbon neutrality by 2050."),
    ("national-plans-digest", 5, "Brazil restored its target to a 53 percent cut by 2030 against 2005 levels and pledged to end illegal deforestation."),
    ("national-plans-digest", 6, "Canada's plan sets a 40 to 45 percent reduction by 2030 below 2005 levels, anchored by a rising national carbon price."),
]

VERIFICATION_CHUNKS = [
    ("verification-playbook", 1, "A grounded answer cites only statements supported by retrieved source passages; unsupported sentences are removed before the answer is shown."),
    ("verification-playbook", 2, "Sentence-level verification compares each answer sentence against every retrieved passage and keeps the best supporting match."),
    ("verification-playbook", 3, "When a verification model is asked to label sentences, it must return one verdict per sentence in a fixed machine-readable format."),
    ("verification-playbook", 4, "Retrieval quality bounds answer quality: if no passage covers the question, a grounded system should say so rather than guess."),
]


def main():
    DATA_DIR.mkdir(parents=True, exist_ok=True)

    rows = build_questions()
    assert len(rows) == 102, len(rows)
    assert sum(1 for r in rows if r["bloom_class"] == "Knowledge") == 48

    with (DATA_DIR / "questions.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text", "bloom_class", "tags"])
        for i, row in enumerate(rows, start=1):
            writer.writerow(
                [f"q{i:03d}", row["text"], row["bloom_class"], ";".join(row["tags"])]
            )

    chunks = GLOSSARY_CHUNKS + PLEDGE_CHUNKS + POLICY_CHUNKS + VERIFICATION_CHUNKS
    with (DATA_DIR / "corpus.jsonl").open("w", encoding="utf-8") as fh:
        for doc_id, page, text in chunks:
            fh.write(json.dumps({"doc_id": doc_id, "page": page, "text": text}) + "\n")

    print(f"wrote {len(rows)} questions and {len(chunks)} corpus chunks to {DATA_DIR}")


if __name__ == "__main__":
    main()
