//! Seeded synthetic enterprise corpus: templated narrative documents
//! (contracts, reports, emails, policies) and settlement tables, plus the
//! three query families built from their gold metadata.

use std::collections::{BTreeSet, HashMap};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{default_stopwords, is_prunable};
use crate::error::{Error, Result};
use crate::model::{Block, Document, GoldCell, Query, QueryType, Table};

pub const VARIETIES: &[&str] = &[
    "Verna", "Eureka", "Fino", "Lisbon", "Primofiori", "Interdonato", "Meyer", "Femminello",
    "Genova", "Villafranca", "Bearss", "Ponderosa", "Limoneira", "Messina", "Mesero", "Lunario",
];

pub const RETAILERS: &[&str] = &[
    "Mercadona", "Carrefour", "Lidl", "Aldi", "Tesco", "Sainsbury", "Edeka", "Rewe", "Auchan",
    "Eroski", "Consum", "Ahold",
];

/// Measure columns of a settlement sheet; each table draws a subset.
pub const MEASURE_COLUMNS: &[&str] = &[
    "Size", "Price/Kg", "Discount", "Brix", "Acidity", "Volume (Kg)", "Boxes", "Grade", "Origin",
    "Caliber", "Currency", "Waste %", "Juice %", "Notes",
];

/// Key columns every settlement table starts with.
pub const KEY_COLUMNS: [&str; 4] = ["Variety", "Week", "Retailer", "Campaign"];

const WEEKS_PER_SHEET: u32 = 4;
const FIRST_CAMPAIGN: u32 = 2021;

const PRODUCER_PREFIXES: &[&str] = &[
    "Agricola", "Citricos", "Frutas", "Huerta", "Campos", "Vergel", "Finca", "Cooperativa",
    "Hermanos", "Viveros", "Granja", "Cosecha", "Terra", "Agro", "Limonar", "Sierra",
];

const PRODUCER_PLACES: &[&str] = &[
    "Segura", "Almanzora", "Guadalhorce", "Jucar", "Vinalopo", "Turia", "Mijares", "Palancia",
    "Orihuela", "Callosa", "Alhama", "Mula", "Cieza", "Lorca", "Totana", "Benidorm",
];

const FILLER: &[&str] = &[
    "The team reviewed packing line capacity ahead of the next shipment window.",
    "Transport costs remained a concern for several partners during the period.",
    "Quality inspectors visited the packing house and found no major issues.",
    "All parties agreed to share forecasts every week to avoid shortages.",
    "Cold storage space was limited during the peak of the harvest.",
    "The sales department asked for earlier notice of any change in volumes.",
    "Growers were reminded to keep field records up to date for audits.",
    "Packaging suppliers delivered cartons on time despite higher demand.",
    "Spring rainfall improved fruit size across most orchards.",
    "The board will review these commitments at the end of the season.",
    "Any dispute will be handled first through the regular account meeting.",
    "Both sides expressed interest in extending the agreement to new markets.",
    "Residue testing followed the usual sampling plan for each lot.",
    "Delays at the port added a few days to some deliveries last month.",
    "The accounts team will issue credit notes once claims are validated.",
    "Labels must show the origin and the packing date on every carton.",
    "Several buyers asked for smaller packs for the summer promotions.",
    "The logistics partner added a second truck on the busiest routes.",
    "Irrigation schedules were adjusted after the heat wave in late spring.",
    "Feedback from store managers was positive about the new crates.",
];

const INVENTORY_SITES: &[&str] = &["Murcia North", "Murcia South", "Alicante Port", "Valencia Hub", "Almeria East"];

/// Value vocabularies the generator draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub varieties: Vec<String>,
    pub retailers: Vec<String>,
    pub weeks: Vec<u32>,
    pub columns: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Vocabulary {
            varieties: owned(VARIETIES),
            retailers: owned(RETAILERS),
            weeks: (1..=52).collect(),
            columns: owned(MEASURE_COLUMNS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_docs: usize,
    pub narrative_fraction: f64,
    /// Inclusive row-count range of a settlement table.
    pub table_rows: (usize, usize),
    /// Inclusive range of measure columns per table, on top of the key columns.
    pub table_cols: (usize, usize),
    pub empty_cell_rate: f64,
    pub vocabulary: Vocabulary,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_docs: 200,
            narrative_fraction: 0.5,
            table_rows: (5, 50),
            table_cols: (3, 12),
            empty_cell_rate: 0.15,
            vocabulary: Vocabulary::default(),
            seed: 42,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let v = &self.vocabulary;
        if !(0.0..=1.0).contains(&self.narrative_fraction) {
            return bad(format!("narrative fraction {} outside [0, 1]", self.narrative_fraction));
        }
        if !(0.0..=1.0).contains(&self.empty_cell_rate) {
            return bad(format!("empty cell rate {} outside [0, 1]", self.empty_cell_rate));
        }
        let (rlo, rhi) = self.table_rows;
        let (clo, chi) = self.table_cols;
        if rlo == 0 || rlo > rhi {
            return bad(format!("bad row range {rlo}..={rhi}"));
        }
        if clo == 0 || clo > chi {
            return bad(format!("bad column range {clo}..={chi}"));
        }
        if v.varieties.is_empty() || v.retailers.is_empty() {
            return bad("varieties and retailers must be non-empty".into());
        }
        if v.weeks.len() < WEEKS_PER_SHEET as usize {
            return bad(format!("need at least {WEEKS_PER_SHEET} weeks"));
        }
        if chi > v.columns.len() {
            return bad(format!("{chi} measure columns requested, vocabulary has {}", v.columns.len()));
        }
        if rhi > WEEKS_PER_SHEET as usize * v.varieties.len() {
            return bad(format!(
                "{rhi} rows exceed the {} distinct (week, variety) pairs of a sheet",
                WEEKS_PER_SHEET as usize * v.varieties.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NarrativeKind {
    Contract,
    Report,
    Email,
    Policy,
}

impl NarrativeKind {
    const CYCLE: [NarrativeKind; 4] = [
        NarrativeKind::Contract,
        NarrativeKind::Report,
        NarrativeKind::Email,
        NarrativeKind::Policy,
    ];

    fn title(self) -> &'static str {
        match self {
            NarrativeKind::Contract => "Quality contract",
            NarrativeKind::Report => "Sustainability report",
            NarrativeKind::Email => "Email",
            NarrativeKind::Policy => "Returns policy",
        }
    }
}

/// The one fact a narrative document states that no other document does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeFact {
    pub doc_id: String,
    pub kind: NarrativeKind,
    pub producer: String,
    pub campaign: u32,
    pub variety: String,
    pub retailer: String,
    /// The number the fact sentence states (threshold, percentage, days).
    pub value: String,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableFact {
    pub doc_id: String,
    /// Index of the settlement table among the document's blocks.
    pub block: usize,
    pub retailer: String,
    pub campaign: u32,
    pub weeks: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldMeta {
    pub seed: u64,
    pub narrative: Vec<NarrativeFact>,
    pub tables: Vec<TableFact>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub docs: Vec<Document>,
    pub gold: GoldMeta,
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<GeneratedCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_narrative = (spec.n_docs as f64 * spec.narrative_fraction).round() as usize;
    let mut is_narrative: Vec<bool> = (0..spec.n_docs).map(|i| i < n_narrative).collect();
    is_narrative.shuffle(&mut rng);

    let producers = producer_names(n_narrative, &mut rng);
    let width = spec.n_docs.max(1).to_string().len().max(4);
    let mut docs = Vec::with_capacity(spec.n_docs);
    let mut gold = GoldMeta {
        seed: spec.seed,
        narrative: Vec::new(),
        tables: Vec::new(),
    };
    let (mut ni, mut ti) = (0usize, 0usize);
    for (i, narrative) in is_narrative.into_iter().enumerate() {
        let id = format!("doc-{:0width$}", i + 1);
        if narrative {
            let kind = NarrativeKind::CYCLE[ni % NarrativeKind::CYCLE.len()];
            let (doc, fact) = narrative_doc(id, kind, &producers[ni], spec, &mut rng);
            docs.push(doc);
            gold.narrative.push(fact);
            ni += 1;
        } else {
            let (doc, fact) = settlement_doc(id, ti, spec, &mut rng);
            docs.push(doc);
            gold.tables.push(fact);
            ti += 1;
        }
    }
    Ok(GeneratedCorpus { docs, gold })
}

fn producer_names(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut base: Vec<String> = PRODUCER_PREFIXES
        .iter()
        .flat_map(|p| PRODUCER_PLACES.iter().map(move |q| format!("{p} {q}")))
        .collect();
    base.shuffle(rng);
    (0..n)
        .map(|i| {
            let name = &base[i % base.len()];
            match i / base.len() {
                0 => name.clone(),
                round => format!("{name} {}", round + 1),
            }
        })
        .collect()
}

fn filler(rng: &mut ChaCha8Rng, n: usize) -> Vec<&'static str> {
    FILLER.choose_multiple(rng, n).copied().collect()
}

fn narrative_doc(
    id: String,
    kind: NarrativeKind,
    producer: &str,
    spec: &CorpusSpec,
    rng: &mut ChaCha8Rng,
) -> (Document, NarrativeFact) {
    let v = &spec.vocabulary;
    let campaign = FIRST_CAMPAIGN + rng.random_range(0..4);
    let variety = v.varieties.choose(rng).expect("validated").clone();
    let retailer = v.retailers.choose(rng).expect("validated").clone();
    let (value, sentence) = match kind {
        NarrativeKind::Contract => {
            let brix = format!("{:.1}", rng.random_range(14..=20) as f64 / 2.0);
            let s = format!(
                "The {campaign} quality contract signed with {producer} sets a minimum of {brix} degrees Brix for {variety} lemons supplied to {retailer}."
            );
            (brix, s)
        }
        NarrativeKind::Report => {
            let pct = rng.random_range(5..=35).to_string();
            let s = format!("{producer} cut water use per hectare by {pct} percent over the {campaign} campaign.");
            (pct, s)
        }
        NarrativeKind::Email => {
            let days = rng.random_range(3..=21).to_string();
            let s = format!(
                "In a message to the logistics desk, {producer} confirmed that {variety} harvesting will begin {days} days later than planned."
            );
            (days, s)
        }
        NarrativeKind::Policy => {
            let days = rng.random_range(2..=10).to_string();
            let s = format!(
                "Under the returns policy agreed with {producer}, rejected pallets must be collected within {days} days of the inspection."
            );
            (days, s)
        }
    };

    let n1 = rng.random_range(3..=5);
    let intro = filler(rng, n1).join(" ");
    let before = rng.random_range(1..=2);
    let after = rng.random_range(1..=3);
    let mut middle = filler(rng, before + after);
    middle.insert(before, &sentence);
    let mut blocks = vec![Block::text(intro), Block::text(middle.join(" "))];
    if rng.random_bool(0.5) {
        let n3 = rng.random_range(2..=4);
        blocks.push(Block::text(filler(rng, n3).join(" ")));
    }
    let doc = Document {
        id: id.clone(),
        title: format!("{}: {producer} ({campaign})", kind.title()),
        blocks,
    };
    let fact = NarrativeFact {
        doc_id: id,
        kind,
        producer: producer.to_string(),
        campaign,
        variety,
        retailer,
        value,
        sentence,
    };
    (doc, fact)
}

fn settlement_doc(id: String, ti: usize, spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> (Document, TableFact) {
    let v = &spec.vocabulary;
    let sheets = v.weeks.len() / WEEKS_PER_SHEET as usize;
    let retailer = &v.retailers[ti % v.retailers.len()];
    let sheet = (ti / v.retailers.len()) % sheets;
    let campaign = FIRST_CAMPAIGN + (ti / (v.retailers.len() * sheets)) as u32;
    let weeks: Vec<u32> = v.weeks[sheet * WEEKS_PER_SHEET as usize..(sheet + 1) * WEEKS_PER_SHEET as usize].to_vec();

    let n_rows = rng.random_range(spec.table_rows.0..=spec.table_rows.1);
    let n_pairs = weeks.len() * v.varieties.len();
    let mut pairs: Vec<usize> = rand::seq::index::sample(rng, n_pairs, n_rows).into_vec();
    pairs.sort_unstable();

    let n_measures = rng.random_range(spec.table_cols.0..=spec.table_cols.1);
    let mut measures: Vec<usize> = rand::seq::index::sample(rng, v.columns.len(), n_measures).into_vec();
    measures.sort_unstable();

    let mut headers: Vec<String> = KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    headers.extend(measures.iter().map(|&c| v.columns[c].clone()));
    let rows = pairs
        .iter()
        .map(|&p| {
            let mut row = vec![
                v.varieties[p % v.varieties.len()].clone(),
                weeks[p / v.varieties.len()].to_string(),
                retailer.clone(),
                campaign.to_string(),
            ];
            for &c in &measures {
                if rng.random_bool(spec.empty_cell_rate) {
                    row.push(String::new());
                } else {
                    row.push(measure_value(&v.columns[c], rng));
                }
            }
            row
        })
        .collect();

    let intro = "Weekly settlement sheet prepared by the commercial team. Prices are quoted per kilogram and discounts apply to the invoiced volume.";
    let mut blocks = vec![Block::text(intro), Block::Table(Table::new(headers, rows))];
    if rng.random_bool(0.3) {
        blocks.push(Block::text(inventory_snippet(rng)));
    }
    let doc = Document {
        id: id.clone(),
        title: format!("Settlement {retailer} {campaign} weeks {}-{}", weeks[0], weeks[weeks.len() - 1]),
        blocks,
    };
    let fact = TableFact {
        doc_id: id,
        block: 1,
        retailer: retailer.clone(),
        campaign,
        weeks,
    };
    (doc, fact)
}

fn measure_value(column: &str, rng: &mut ChaCha8Rng) -> String {
    let pick = |rng: &mut ChaCha8Rng, xs: &[&str]| xs.choose(rng).expect("non-empty").to_string();
    match column {
        "Size" => pick(rng, &["XS", "S", "M", "L", "XL"]),
        "Price/Kg" => format!("{:.2}", rng.random_range(8..=24) as f64 * 0.05),
        "Discount" => pick(rng, &["0%", "2%", "5%", "8%", "10%"]),
        "Brix" => format!("{:.1}", rng.random_range(14..=22) as f64 / 2.0),
        "Acidity" => format!("{:.1}", rng.random_range(45..=65) as f64 / 10.0),
        "Volume (Kg)" => (rng.random_range(2..=80) * 250).to_string(),
        "Boxes" => (rng.random_range(10..=200) * 10).to_string(),
        "Grade" => pick(rng, &["Extra", "I", "II"]),
        "Origin" => pick(rng, &["Murcia", "Alicante", "Valencia", "Almeria", "Malaga", "Huelva"]),
        "Caliber" => pick(rng, &["C1", "C2", "C3", "C4", "C5"]),
        "Currency" => {
            if rng.random_bool(0.9) {
                "EUR".into()
            } else {
                "USD".into()
            }
        }
        "Waste %" | "Juice %" => format!("{:.1}%", rng.random_range(5..=90) as f64 / 2.0),
        "Notes" => pick(rng, &["-", "n/a", "ok", "checked", "late", "de la", "pending", "none"]),
        _ => format!("{:.2}", rng.random_range(0..=2000) as f64 / 100.0),
    }
}

/// A small Markdown table pasted into a text block.
fn inventory_snippet(rng: &mut ChaCha8Rng) -> String {
    let mut lines = vec![
        "| Warehouse | Pallets | Temp (C) |".to_string(),
        "| --- | --- | --- |".to_string(),
    ];
    let n = rng.random_range(2..=INVENTORY_SITES.len());
    for site in INVENTORY_SITES.choose_multiple(rng, n) {
        lines.push(format!(
            "| {site} | {} | {:.1} |",
            rng.random_range(4..=60),
            rng.random_range(40..=110) as f64 / 10.0
        ));
    }
    lines.join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCounts {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

impl Default for QueryCounts {
    fn default() -> Self {
        QueryCounts { a: 40, b: 40, c: 20 }
    }
}

pub fn generate_queries(docs: &[Document], gold: &GoldMeta, counts: QueryCounts, seed: u64) -> Result<Vec<Query>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let table_of = |f: &TableFact| -> Result<&Table> {
        match by_id.get(f.doc_id.as_str()).and_then(|d| d.blocks.get(f.block)) {
            Some(Block::Table(t)) => Ok(t),
            _ => Err(Error::Config(format!("gold table {}#{} not in corpus", f.doc_id, f.block))),
        }
    };
    let mut out = Vec::with_capacity(counts.a + counts.b + counts.c);

    if counts.a > gold.narrative.len() {
        return Err(Error::CorpusTooSmall(format!(
            "{} type A queries requested, {} narrative documents available",
            counts.a,
            gold.narrative.len()
        )));
    }
    for (i, fi) in rand::seq::index::sample(&mut rng, gold.narrative.len(), counts.a).into_iter().enumerate() {
        let f = &gold.narrative[fi];
        out.push(Query {
            qid: format!("qA-{:04}", i + 1),
            qtype: QueryType::A,
            text: paraphrase(f),
            gold_doc_ids: BTreeSet::from([f.doc_id.clone()]),
            gold_cells: None,
        });
    }

    let stopwords = default_stopwords();
    let mut lookups = Vec::new();
    for f in &gold.tables {
        let t = table_of(f)?;
        for (r, row) in t.rows.iter().enumerate() {
            for c in KEY_COLUMNS.len()..t.n_cols() {
                if !is_prunable(&row[c], &stopwords) {
                    lookups.push((f, r, c));
                }
            }
        }
    }
    if counts.b > lookups.len() {
        return Err(Error::CorpusTooSmall(format!(
            "{} type B queries requested, {} addressable cells available",
            counts.b,
            lookups.len()
        )));
    }
    for (i, li) in rand::seq::index::sample(&mut rng, lookups.len(), counts.b).into_iter().enumerate() {
        let (f, r, c) = lookups[li];
        let t = table_of(f)?;
        let row = &t.rows[r];
        out.push(Query {
            qid: format!("qB-{:04}", i + 1),
            qtype: QueryType::B,
            text: format!(
                "What was the {} of {} in week {} of the {} campaign at {}?",
                t.headers[c], row[0], row[1], f.campaign, f.retailer
            ),
            gold_doc_ids: BTreeSet::from([f.doc_id.clone()]),
            gold_cells: Some(vec![GoldCell {
                doc: f.doc_id.clone(),
                row: r,
                col: c,
            }]),
        });
    }

    let contracts: Vec<&NarrativeFact> = gold
        .narrative
        .iter()
        .filter(|f| f.kind == NarrativeKind::Contract)
        .collect();
    let pairs = contracts.len() * gold.tables.len();
    if counts.c > pairs {
        return Err(Error::CorpusTooSmall(format!(
            "{} type C queries requested, {} contract/table pairs available",
            counts.c, pairs
        )));
    }
    let chosen = rand::seq::index::sample(&mut rng, pairs, counts.c).into_vec();
    for (i, pi) in chosen.into_iter().enumerate() {
        let contract = contracts[pi / gold.tables.len()];
        let tf = &gold.tables[pi % gold.tables.len()];
        let t = table_of(tf)?;
        let row = t.rows.choose(&mut rng).expect("tables have rows");
        out.push(Query {
            qid: format!("qC-{:04}", i + 1),
            qtype: QueryType::C,
            text: format!(
                "Under the quality contract with {}, which {} lots sold at {} in week {} of the {} campaign fall below the agreed Brix minimum?",
                contract.producer, row[0], tf.retailer, row[1], tf.campaign
            ),
            gold_doc_ids: BTreeSet::from([contract.doc_id.clone(), tf.doc_id.clone()]),
            gold_cells: None,
        });
    }
    Ok(out)
}

fn paraphrase(f: &NarrativeFact) -> String {
    let NarrativeFact {
        producer,
        campaign,
        variety,
        ..
    } = f;
    match f.kind {
        NarrativeKind::Contract => {
            format!("What Brix minimum applies to {variety} lemons from {producer} under the {campaign} contract?")
        }
        NarrativeKind::Report => {
            format!("How much did {producer} reduce water consumption per hectare during {campaign}?")
        }
        NarrativeKind::Email => format!("When does {producer} expect to start harvesting {variety}?"),
        NarrativeKind::Policy => format!("How many days does {producer} have to collect rejected pallets?"),
    }
}
