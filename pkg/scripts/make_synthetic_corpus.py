"""Generate the bundled 5-company synthetic corpus under data/synthetic/.

Each report mixes ESG statements drawn from a template pool with filler
sentences. The stub LLM replies are the template triples, so the whole
pipeline runs offline with a known ground truth. The output is a pure
function of SEED; rerunning the script rewrites identical files.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import numpy as np

from esgkg.extraction import EsgTriple, serialize_triples
from esgkg.ingest import extract_text, read_manifest, segment_sentences

SEED = 20240501
OUT = Path(__file__).resolve().parents[1] / "data" / "synthetic"

# (sentence template, [(category, predicate, object), ...])
ESG_POOL = [
    ("We achieved a reduction of landfill waste at our plants of {p} percent.",
     [("Waste", "Reduction of", "Landfill waste at our plants")]),
    ("We made an investment in recycling technologies that turn packaging waste into new material.",
     [("Waste", "Investment in", "Recycling technologies for packaging waste")]),
    ("We cut water withdrawal in stressed regions by {p} percent compared with the previous year.",
     [("Water", "Reduction of", "Water withdrawal in stressed regions")]),
    ("Our energy supply moved to renewable electricity at {n} sites.",
     [("Energy", "Transition to", "Renewable electricity")]),
    ("We set a target for net zero GHG emissions across our operations by 2040.",
     [("GHG Emissions", "Target for", "Net zero emissions by 2040")]),
    ("We fund the protection of wetland habitats near our facilities to support biodiversity.",
     [("Biodiversity", "Protection of", "Wetland habitats near our facilities")]),
    ("{n} of our office buildings earned green building certification.",
     [("Green Buildings", "Certification of", "Office buildings")]),
    ("We started the elimination of single-use plastic packaging from our product range.",
     [("Packaging", "Elimination of", "Single-use plastic packaging")]),
    ("All major sites run an environmental management system certified to ISO 14001.",
     [("Environmental Management System", "Certification of", "ISO 14001 management system")]),
    ("Hazardous waste from our laboratories is collected for safe disposal.",
     [("Hazardous Waste", "Safe disposal of", "Hazardous waste from laboratories")]),
    ("We expanded waste recycling programs in all our stores.",
     [("Waste Recycling", "Expansion of", "Recycling programs in stores")]),
    ("Every employee completed health and safety training during the year.",
     [("Health and Safety", "Training on", "Health and safety procedures")]),
    ("We increased the share of women in leadership roles to support diversity.",
     [("Diversity", "Increase of", "Women in leadership roles")]),
    ("We made investments in employee development through new learning programs.",
     [("Employee Development", "Investments in", "Employee learning programs")]),
    ("Our partnership with local schools helped the community and society around our sites.",
     [("Community and Society", "Partnership with", "Local schools")]),
    ("We carried out an assessment of human rights risks among our suppliers.",
     [("Human Rights", "Assessment of", "Human rights risks among suppliers")]),
    ("Our supply chain team completed audits of {n} supplier factories.",
     [("Supply Chain", "Audit of", "Supplier factories")]),
    ("We adopted a fair wage policy to strengthen labor practices across the group.",
     [("Labor Practices", "Adoption of", "Fair wage policy")]),
    ("Through philanthropy we donated {n} thousand meals to food banks.",
     [("Philanthropy", "Donation to", "Food banks")]),
    ("We improved privacy and IT security to protect customer data.",
     [("Privacy and IT", "Protection of", "Customer data")]),
    ("Product safety testing covered every new product before launch.",
     [("Product Safety", "Testing of", "New products")]),
    ("We support access to healthcare through free clinics in rural areas.",
     [("Access to Healthcare", "Provision of", "Free clinics in rural areas")]),
    ("Our supplier code prohibits child labor in every part of the supply base.",
     [("Child Labor", "Prohibition of", "Child labor in the supply base")]),
    ("We improved board diversity with the appointment of two independent female directors.",
     [("Board Diversity", "Appointment of", "Independent female directors")]),
    ("All staff received business ethics training on our code of conduct.",
     [("Business Ethics", "Training on", "Code of conduct")]),
    ("Our policy against bribery and corruption applies to every business partner.",
     [("Corruption", "Policy against", "Bribery and corruption")]),
    ("Executive remuneration is now linked to ESG targets.",
     [("Remuneration", "Link to", "ESG targets")]),
    ("We publish the taxes paid in each country where we operate.",
     [("Taxes", "Disclosure of", "Taxes paid by country")]),
    ("We held an engagement with institutional shareholders on climate strategy.",
     [("Shareholders", "Engagement with", "Institutional shareholders")]),
    ("The audit committee completed a review of internal audit findings.",
     [("Audit", "Review of", "Internal audit findings")]),
    ("We disclose all lobbying expenditures in our annual filing.",
     [("Lobbying", "Disclosure of", "Lobbying expenditures")]),
    ("We completed a review of our supply chain responsibility and risk assessment.",
     [("Supply Chain", "Review of", "Our supply chain responsibility and risk assessment")]),
    ("We issued green bonds to support sustainable finance projects.",
     [("Sustainable Finance", "Issuance of", "Green bonds")]),
    ("Our financial inclusion program expanded microloans for small businesses.",
     [("Financial Inclusion", "Expansion of", "Microloans for small businesses")]),
    ("We publish clinical trials results to ensure transparency.",
     [("Clinical Trials", "Transparency in", "Clinical trial results")]),
    ("We reduced animal testing and promote animal welfare in research.",
     [("Animal Welfare", "Reduction of", "Animal testing")]),
    ("We committed to responsible marketing to children across all brands.",
     [("Responsible Marketing", "Commitment to", "Responsible marketing to children")]),
    ("We cut energy consumption in our data centers by {p} percent.",
     [("Energy", "Reduction of", "Energy consumption in data centers")]),
    ("We recycle process water at our bottling plants to save water.",
     [("Water", "Recycling of", "Process water")]),
    ("We made an investment in solar energy panels and cut waste at our warehouses.",
     [("Energy", "Investment in", "Solar panels"), ("Waste", "Reduction of", "Warehouse waste")]),
]

# sentences whose stub reply is deliberately malformed
MALFORMED = {"Our energy supply moved to renewable electricity at {n} sites."}

FILLER_POOL = [
    "This document covers the fiscal year ending in December.",
    "Revenue grew by {p} percent thanks to strong demand.",
    "Our headquarters moved to a new campus last spring.",
    "The company operates in {n} markets worldwide.",
    "We opened {n} new stores during the year.",
    "This document was approved for publication in March.",
    "The chief executive thanks everyone for another year of progress.",
    "Several new products reached the market ahead of plan.",
    "Our brand celebrated its anniversary with a series of events.",
    "The next edition will follow the same structure.",
    "Figures are rounded to the nearest whole number.",
    "Thank you for reading and for your continued interest.",
    "Our shares were listed on a second exchange in June.",
    "The group completed the purchase of a regional competitor.",
    "Operating profit rose for the third year in a row.",
    "More details are available on our website.",
]

COMPANIES = [
    dict(company_id="acme_energy", esg_combined=71.5, env_score=78.0, social_score=66.0, gov_score=70.5,
         sector="Energy", industry="Utilities", country="Germany", region="EMEA",
         subregion="Western Europe", continent="Europe", incorporation_year=1952, employees=41000,
         market_cap=62.0e9, ebitda=9.1e9, liabilities=48.0e9),
    dict(company_id="borealis_foods", esg_combined=63.0, env_score=60.5, social_score=68.0, gov_score=59.0,
         sector="Consumer Staples", industry="Food Products", country="Canada", region="Americas",
         subregion="Northern America", continent="America", incorporation_year=1978, employees=23000,
         market_cap=18.5e9, ebitda=2.4e9, liabilities=9.2e9),
    dict(company_id="cobalt_bank", esg_combined=55.5, env_score=48.0, social_score=57.5, gov_score=64.0,
         sector="Financials", industry="Banks", country="Singapore", region="APAC",
         subregion="South-eastern Asia", continent="Asia", incorporation_year=1965, employees=30500,
         market_cap=75.0e9, ebitda=11.3e9, liabilities=410.0e9),
    dict(company_id="delta_pharma", esg_combined=68.0, env_score=63.0, social_score=74.5, gov_score=66.0,
         sector="Health Care", industry="Pharmaceuticals", country="Switzerland", region="EMEA",
         subregion="Western Europe", continent="Europe", incorporation_year=1896, employees=101000,
         market_cap=230.0e9, ebitda=21.0e9, liabilities=70.0e9),
    dict(company_id="evergreen_retail", esg_combined=49.0, env_score=52.0, social_score=47.5, gov_score=48.0,
         sector="Consumer Discretionary", industry="Retail", country="Japan", region="APAC",
         subregion="Eastern Asia", continent="Asia", incorporation_year=1991, employees=58000,
         market_cap=27.0e9, ebitda=3.3e9, liabilities=14.5e9),
]

N_ESG = 24
N_FILLER = 16


def wrap(sentence: str, width: int = 72) -> list[str]:
    """Greedy wrap that only breaks before lowercase words, so normalization rejoins lines with a space."""
    words = sentence.split(" ")
    lines, cur = [], words[0]
    for w in words[1:]:
        if len(cur) + 1 + len(w) > width and w[0].islower():
            lines.append(cur)
            cur = w
        else:
            cur += " " + w
    lines.append(cur)
    return lines


def render_report(sentences: list[str], rng: np.random.Generator) -> str:
    paragraphs, i = [], 0
    while i < len(sentences):
        k = int(rng.integers(3, 7))
        body = " ".join(sentences[i:i + k])
        paragraphs.append("\n".join(wrap(body)))
        i += k
    return "\n\n".join(paragraphs) + "\n"


def main() -> int:
    rng = np.random.default_rng(SEED)
    reports = OUT / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    replies: dict[str, str] = {}
    expected: dict[str, list[str]] = {}

    for comp in COMPANIES:
        cid = comp["company_id"]
        # skewed per-company preferences, so disclosure profiles differ
        weights = rng.gamma(0.3, size=len(ESG_POOL))
        esg = rng.choice(len(ESG_POOL), size=N_ESG, replace=False, p=weights / weights.sum())
        filler = rng.choice(len(FILLER_POOL), size=N_FILLER, replace=False)
        items = [("esg", int(i)) for i in esg] + [("filler", int(i)) for i in filler]
        items = [items[j] for j in rng.permutation(len(items))]
        texts = []
        for kind, idx in items:
            template = ESG_POOL[idx][0] if kind == "esg" else FILLER_POOL[idx]
            text = template.format(n=int(rng.integers(2, 40)), p=int(rng.integers(5, 45)))
            texts.append(text)
            if kind == "esg":
                if template in MALFORMED:
                    replies[text] = "I found an ESG action about renewable electricity."
                else:
                    replies[text] = serialize_triples(EsgTriple(*t) for t in ESG_POOL[idx][1])
        expected[cid] = texts
        (reports / f"{cid}.txt").write_text(render_report(texts, rng), encoding="utf-8")

    with (OUT / "manifest.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["company_id", "fiscal_year", "media", "source_path"])
        for comp in COMPANIES:
            w.writerow([comp["company_id"], 2022, "plain_text", f"reports/{comp['company_id']}.txt"])

    with (OUT / "companies.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(COMPANIES[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(COMPANIES)

    (OUT / "stub_replies.json").write_text(
        json.dumps(dict(sorted(replies.items())), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")

    # ingestion must recover every generated sentence verbatim
    for doc in read_manifest(OUT / "manifest.csv"):
        got = [s.text for s in segment_sentences(extract_text(doc))]
        if got != expected[doc.company_id]:
            bad = next(i for i, (a, b) in enumerate(zip(got, expected[doc.company_id])) if a != b)
            print(f"{doc.company_id}: sentence {bad} differs: {got[bad]!r}", file=sys.stderr)
            return 1
    print(f"wrote {len(COMPANIES)} reports and {len(replies)} stub replies to {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
