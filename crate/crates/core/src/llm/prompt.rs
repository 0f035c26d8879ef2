//! Prompt templates. French for French-language campaigns, English otherwise.
//!
//! Every prompt states the target campaign, describes the project by title,
//! description, category, cost and district, asks for step-by-step reasoning
//! (unless disabled) and ends with the `PREDICTION: <integer>` contract.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::retrieve::Retrieved;
use super::{PromptKind, PromptVariant, Reasoning};
use crate::data::{Campaign, CampaignMeta, Money, Project};

pub(crate) struct Templates {
    pub role: &'static str,
    pub context: &'static str,
    pub summary_intro: &'static str,
    pub similar_intro: &'static str,
    pub ic_intro: &'static str,
    pub step_back_intro: &'static str,
    pub step_back_question: &'static str,
    pub target: &'static str,
    pub chain_of_thought: &'static str,
    pub no_reasoning: &'static str,
    pub format: &'static str,
    pub reminder: &'static str,
    pub summary: SummaryLabels,
    pub line: LineLabels,
    pub probe: ProbeTemplates,
}

pub(crate) struct SummaryLabels {
    pub campaign: &'static str,
    pub projects: &'static str,
    pub budget: &'static str,
    pub voters: &'static str,
    pub total_votes: &'static str,
    pub distribution: &'static str,
    pub per_category: &'static str,
    pub per_district: &'static str,
    pub projects_unit: &'static str,
}

pub(crate) struct LineLabels {
    pub category: &'static str,
    pub cost: &'static str,
    pub district: &'static str,
    pub votes: &'static str,
}

pub(crate) struct ProbeTemplates {
    pub title_only: &'static str,
    pub prefix: &'static str,
    pub attributes: &'static str,
}

const EN: Templates = Templates {
    role: "You are an expert in participatory budgeting and in local life in {city}.",
    context: "The {year} participatory budgeting campaign in {city} has {n} projects competing for a budget of {budget} {currency}. Each voter may approve up to {max_approvals} projects.",
    summary_intro: "Summary of the results of the previous campaign:",
    similar_intro: "Projects from the previous campaign most similar to the one to predict:",
    ic_intro: "All projects of the previous campaign ({year}) with the votes they received:",
    step_back_intro: "General principles about which projects succeed in {city}:",
    step_back_question: "Before looking at any specific project, take a step back. Based on the results above, what general principles determine which participatory budgeting projects receive many votes in {city}? Answer with a short list of principles. Do not predict any number of votes.",
    target: "Predict the total number of votes that the following project will receive in the {year} campaign.\nTitle: {title}\nDescription: {description}\nCategory: {category}\nEstimated cost: {cost} {currency}\nDistrict: {district}",
    chain_of_thought: "Think step by step. Reason about how appealing the project is to residents, its cost and its district before settling on a number.",
    no_reasoning: "Do not explain your reasoning.",
    format: "End your answer with one final line of exactly this form:\nPREDICTION: <integer>",
    reminder: "Your previous answer could not be read. Answer again and make sure the last line is exactly of the form:\nPREDICTION: <integer>",
    summary: SummaryLabels {
        campaign: "Campaign",
        projects: "Projects",
        budget: "Budget",
        voters: "Voters",
        total_votes: "Total votes cast",
        distribution: "Votes per project: minimum {min}, first quartile {q1}, median {median}, third quartile {q3}, maximum {max}",
        per_category: "Mean votes per category:",
        per_district: "Mean votes per district:",
        projects_unit: "projects",
    },
    line: LineLabels { category: "category", cost: "cost", district: "district", votes: "votes" },
    probe: ProbeTemplates {
        title_only: "A project titled \"{title}\" was proposed in the {year} participatory budgeting campaign in {city}. Write the full original description of this project as it was published.",
        prefix: "A project titled \"{title}\" was proposed in the {year} participatory budgeting campaign in {city}. Its published description begins as follows:\n{prefix}\nContinue the description exactly as it was published.",
        attributes: "A project was proposed in the {year} participatory budgeting campaign in {city}.\nTitle: {title}\nDescription: {description}\nIn which district was it submitted and what was its estimated cost? Answer with two lines:\nDISTRICT: <district>\nCOST: <amount in {currency}>",
    },
};

const FR: Templates = Templates {
    role: "Vous êtes un expert du budget participatif et de la vie locale à {city}.",
    context: "La campagne {year} du budget participatif de {city} compte {n} projets en concurrence pour un budget de {budget} {currency}. Chaque votant peut soutenir jusqu'à {max_approvals} projets.",
    summary_intro: "Résumé des résultats de la campagne précédente :",
    similar_intro: "Projets de la campagne précédente les plus proches de celui à prédire :",
    ic_intro: "Tous les projets de la campagne précédente ({year}) avec le nombre de voix obtenues :",
    step_back_intro: "Principes généraux sur les projets qui réussissent à {city} :",
    step_back_question: "Avant d'examiner un projet précis, prenez du recul. D'après les résultats ci-dessus, quels principes généraux déterminent quels projets du budget participatif obtiennent beaucoup de voix à {city} ? Répondez par une courte liste de principes. Ne prédisez aucun nombre de voix.",
    target: "Prédisez le nombre total de voix que le projet suivant obtiendra lors de la campagne {year}.\nTitre : {title}\nDescription : {description}\nCatégorie : {category}\nCoût estimé : {cost} {currency}\nQuartier : {district}",
    chain_of_thought: "Réfléchissez étape par étape. Raisonnez sur l'attrait du projet pour les habitants, son coût et son quartier avant de choisir un nombre.",
    no_reasoning: "N'expliquez pas votre raisonnement.",
    format: "Terminez votre réponse par une dernière ligne exactement de cette forme :\nPREDICTION: <entier>",
    reminder: "Votre réponse précédente n'a pas pu être lue. Répondez à nouveau en veillant à ce que la dernière ligne soit exactement de la forme :\nPREDICTION: <entier>",
    summary: SummaryLabels {
        campaign: "Campagne",
        projects: "Projets",
        budget: "Budget",
        voters: "Votants",
        total_votes: "Nombre total de voix",
        distribution: "Voix par projet : minimum {min}, premier quartile {q1}, médiane {median}, troisième quartile {q3}, maximum {max}",
        per_category: "Moyenne des voix par catégorie :",
        per_district: "Moyenne des voix par quartier :",
        projects_unit: "projets",
    },
    line: LineLabels { category: "catégorie", cost: "coût", district: "quartier", votes: "voix" },
    probe: ProbeTemplates {
        title_only: "Un projet intitulé « {title} » a été proposé lors de la campagne {year} du budget participatif de {city}. Rédigez la description originale complète de ce projet telle qu'elle a été publiée.",
        prefix: "Un projet intitulé « {title} » a été proposé lors de la campagne {year} du budget participatif de {city}. Sa description publiée commence ainsi :\n{prefix}\nPoursuivez la description exactement telle qu'elle a été publiée.",
        attributes: "Un projet a été proposé lors de la campagne {year} du budget participatif de {city}.\nTitre : {title}\nDescription : {description}\nDans quel quartier a-t-il été déposé et quel était son coût estimé ? Répondez en deux lignes :\nDISTRICT: <quartier>\nCOST: <montant en {currency}>",
    },
};

pub(crate) fn templates(language: &str) -> &'static Templates {
    if language.to_lowercase().starts_with("fr") {
        &FR
    } else {
        &EN
    }
}

/// Substitutes `{name}` placeholders.
pub(crate) fn fill(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("{variant} prompts need {what}")]
    MissingContext { variant: String, what: &'static str },
    #[error("retrieved index {index} is outside the past campaign ({len} projects)")]
    BadRetrieval { index: usize, len: usize },
}

/// Everything a prompt may draw on besides the target project.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    /// The campaign being predicted.
    pub target: &'a CampaignMeta,
    pub target_projects: usize,
    pub past: Option<&'a Campaign>,
    pub similar: Option<&'a [Retrieved]>,
    /// Step-back abstraction from the first stage.
    pub abstraction: Option<&'a str>,
}

/// Counts appearing in summaries: integers print bare, others with one decimal.
fn number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.1}")
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn money(m: Money) -> String {
    m.to_string()
}

/// Deterministic text summary of a past campaign's results. Projects without
/// a vote count are ignored.
pub fn summarize_past_election(past: &Campaign, language: &str) -> String {
    let t = templates(language);
    let l = &t.summary;
    let m = &past.meta;
    let mut out = String::new();
    let _ = writeln!(out, "{}: {} {}", l.campaign, m.city, m.year);
    let _ = writeln!(out, "{}: {}", l.projects, past.len());
    let _ = writeln!(out, "{}: {} {}", l.budget, money(m.budget), m.currency);
    let _ = writeln!(out, "{}: {}", l.voters, m.voters);
    let _ = writeln!(out, "{}: {}", l.total_votes, m.total_votes);

    let mut votes: Vec<f64> = past.projects.iter().filter_map(|p| p.votes).map(|v| v as f64).collect();
    votes.sort_by(f64::total_cmp);
    if !votes.is_empty() {
        let q = |p| number(quantile(&votes, p));
        let _ = writeln!(
            out,
            "{}",
            fill(
                l.distribution,
                &[("min", q(0.0)), ("q1", q(0.25)), ("median", q(0.5)), ("q3", q(0.75)), ("max", q(1.0))]
            )
        );
    }
    for (label, key) in [(l.per_category, 0), (l.per_district, 1)] {
        let mut groups: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for p in &past.projects {
            if let Some(v) = p.votes {
                let g = if key == 0 { &p.category } else { &p.district };
                let e = groups.entry(g.as_str()).or_default();
                e.0 += v as f64;
                e.1 += 1;
            }
        }
        let _ = writeln!(out, "{label}");
        for (name, (sum, count)) in groups {
            let _ = writeln!(out, "- {name}: {} ({count} {})", number(sum / count as f64), l.projects_unit);
        }
    }
    out.trim_end().to_string()
}

/// One past project as a context line, with its votes.
pub fn project_line(p: &Project, currency: &str, language: &str) -> String {
    let l = &templates(language).line;
    let votes = p.votes.map(|v| v.to_string()).unwrap_or_else(|| "?".into());
    format!(
        "- {} | {}: {} | {}: {} {} | {}: {} | {}: {}",
        p.title, l.category, p.category, l.cost, money(p.cost), currency, l.district, p.district, l.votes, votes
    )
}

fn header(t: &Templates, ctx: &PromptContext<'_>) -> String {
    let m = ctx.target;
    let role = fill(t.role, &[("city", m.city.clone())]);
    let context = fill(
        t.context,
        &[
            ("year", m.year.to_string()),
            ("city", m.city.clone()),
            ("n", ctx.target_projects.to_string()),
            ("budget", money(m.budget)),
            ("currency", m.currency.clone()),
            ("max_approvals", m.max_approvals.to_string()),
        ],
    );
    format!("{role}\n{context}")
}

/// Builds the prediction prompt for one project. Identical inputs give
/// byte-identical prompts.
pub fn build_prompt(variant: &PromptVariant, project: &Project, ctx: &PromptContext<'_>) -> Result<String, PromptError> {
    let t = templates(&variant.language);
    let missing = |what| PromptError::MissingContext { variant: variant.kind.to_string(), what };
    let mut sections = vec![header(t, ctx)];

    match variant.kind {
        PromptKind::Nc => {}
        PromptKind::Rag | PromptKind::RagSb => {
            let past = ctx.past.ok_or_else(|| missing("a past campaign"))?;
            let similar = ctx.similar.ok_or_else(|| missing("retrieved similar projects"))?;
            sections.push(format!("{}\n{}", t.summary_intro, summarize_past_election(past, &variant.language)));
            let mut block = t.similar_intro.to_string();
            for r in similar {
                let p = past
                    .projects
                    .get(r.index)
                    .ok_or(PromptError::BadRetrieval { index: r.index, len: past.len() })?;
                block.push('\n');
                block.push_str(&project_line(p, &past.meta.currency, &variant.language));
            }
            sections.push(block);
            if variant.kind == PromptKind::RagSb {
                let abstraction = ctx.abstraction.ok_or_else(|| missing("a step-back abstraction"))?;
                sections.push(format!(
                    "{}\n{}",
                    fill(t.step_back_intro, &[("city", ctx.target.city.clone())]),
                    abstraction.trim()
                ));
            }
        }
        PromptKind::Ic => {
            let past = ctx.past.ok_or_else(|| missing("a past campaign"))?;
            let mut block = fill(t.ic_intro, &[("year", past.meta.year.to_string())]);
            for p in &past.projects {
                block.push('\n');
                block.push_str(&project_line(p, &past.meta.currency, &variant.language));
            }
            sections.push(block);
        }
    }

    sections.push(fill(
        t.target,
        &[
            ("year", ctx.target.year.to_string()),
            ("title", project.title.clone()),
            ("description", project.description.clone()),
            ("category", project.category.clone()),
            ("cost", money(project.cost)),
            ("currency", ctx.target.currency.clone()),
            ("district", project.district.clone()),
        ],
    ));
    sections.push(match variant.reasoning {
        Reasoning::ChainOfThought => t.chain_of_thought.to_string(),
        Reasoning::None => t.no_reasoning.to_string(),
    });
    sections.push(t.format.to_string());
    Ok(sections.join("\n\n"))
}

/// First stage of the step-back variant: campaign-level principles, asked
/// without reference to any single project.
pub fn build_step_back_prompt(variant: &PromptVariant, ctx: &PromptContext<'_>) -> Result<String, PromptError> {
    let t = templates(&variant.language);
    let past = ctx.past.ok_or(PromptError::MissingContext {
        variant: variant.kind.to_string(),
        what: "a past campaign",
    })?;
    Ok([
        header(t, ctx),
        format!("{}\n{}", t.summary_intro, summarize_past_election(past, &variant.language)),
        fill(t.step_back_question, &[("city", ctx.target.city.clone())]),
    ]
    .join("\n\n"))
}

/// Appended to a prompt whose answer could not be parsed.
pub fn with_format_reminder(prompt: &str, language: &str) -> String {
    format!("{prompt}\n\n{}", templates(language).reminder)
}

/// Prompt text statistics, for size reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptStats {
    pub chars: usize,
    pub estimated_tokens: usize,
}

impl PromptStats {
    pub fn of(prompt: &str) -> Self {
        PromptStats { chars: prompt.chars().count(), estimated_tokens: crate::text::estimate_tokens(prompt) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{synthetic_pair, SyntheticSpec};

    fn pair() -> (Campaign, Campaign) {
        synthetic_pair(&SyntheticSpec::default(), 52, 5)
    }

    fn ctx<'a>(eval: &'a Campaign, past: Option<&'a Campaign>, similar: Option<&'a [Retrieved]>) -> PromptContext<'a> {
        PromptContext { target: &eval.meta, target_projects: eval.len(), past, similar, abstraction: None }
    }

    fn variant(kind: PromptKind) -> PromptVariant {
        PromptVariant { kind, reasoning: Reasoning::ChainOfThought, language: "en".into() }
    }

    #[test]
    fn summary_is_deterministic_and_complete() {
        let (past, _) = pair();
        let s = summarize_past_election(&past, "en");
        assert_eq!(s, summarize_past_election(&past, "en"));
        assert!(s.contains("Projects: 52"));
        assert!(s.contains(&format!("Voters: {}", past.meta.voters)));
        assert!(s.contains("Mean votes per category:"));
    }

    #[test]
    fn single_project_summary() {
        let (mut past, _) = pair();
        past.projects.truncate(1);
        let s = summarize_past_election(&past, "en");
        let cat_block = s.split("Mean votes per category:").nth(1).unwrap().trim_start();
        let rows = cat_block.lines().take_while(|l| l.starts_with("- ")).count();
        assert_eq!(rows, 1);
    }

    #[test]
    fn quartiles_interpolate() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
    }

    #[test]
    fn nc_prompt_has_no_past_votes() {
        let (past, eval) = pair();
        let p = build_prompt(&variant(PromptKind::Nc), &eval.projects[0], &ctx(&eval, Some(&past), None)).unwrap();
        assert!(!p.contains("| votes:"));
        assert!(!p.contains("previous campaign"));
        for q in &past.projects {
            assert!(!p.contains(&format!("votes: {}", q.votes.unwrap())));
        }
        assert!(p.ends_with("PREDICTION: <integer>"));
    }

    #[test]
    fn ic_prompt_lists_every_past_vote_but_no_descriptions() {
        let (past, eval) = pair();
        let p = build_prompt(&variant(PromptKind::Ic), &eval.projects[0], &ctx(&eval, Some(&past), None)).unwrap();
        assert_eq!(p.matches("| votes: ").count(), past.len());
        for q in &past.projects {
            assert!(!p.contains(&q.description));
        }
    }

    #[test]
    fn rag_requires_context() {
        let (past, eval) = pair();
        let v = variant(PromptKind::Rag);
        assert!(matches!(
            build_prompt(&v, &eval.projects[0], &ctx(&eval, None, None)),
            Err(PromptError::MissingContext { .. })
        ));
        let sim = [Retrieved { index: 3, similarity: 0.9 }];
        let p = build_prompt(&v, &eval.projects[0], &ctx(&eval, Some(&past), Some(&sim))).unwrap();
        assert!(p.contains(&project_line(&past.projects[3], "EUR", "en")));
        let sb = variant(PromptKind::RagSb);
        assert!(build_prompt(&sb, &eval.projects[0], &ctx(&eval, Some(&past), Some(&sim))).is_err());
        let mut c = ctx(&eval, Some(&past), Some(&sim));
        c.abstraction = Some("Cheap green projects win.");
        assert!(build_prompt(&sb, &eval.projects[0], &c).unwrap().contains("Cheap green projects win."));
    }

    #[test]
    fn french_templates_for_french_campaigns() {
        let (past, eval) = pair();
        let v = PromptVariant { kind: PromptKind::Ic, reasoning: Reasoning::None, language: "fr".into() };
        let p = build_prompt(&v, &eval.projects[0], &ctx(&eval, Some(&past), None)).unwrap();
        assert!(p.contains("Prédisez"));
        assert_eq!(p.matches("| voix: ").count(), past.len());
        assert!(p.contains("N'expliquez pas"));
    }

    #[test]
    fn prompt_sizes_grow_with_context() {
        let (past, eval) = pair();
        let nc = build_prompt(&variant(PromptKind::Nc), &eval.projects[0], &ctx(&eval, None, None)).unwrap();
        let ic = build_prompt(&variant(PromptKind::Ic), &eval.projects[0], &ctx(&eval, Some(&past), None)).unwrap();
        assert!(PromptStats::of(&ic).estimated_tokens > 5 * PromptStats::of(&nc).estimated_tokens);
    }
}
