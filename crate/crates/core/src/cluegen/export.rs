use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{build_prompt, ClueRecord, FineTuneConfigRecord, PromptTemplate};
use crate::corpus::ContextKeywordPair;

/// One instruction-tuning example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub instruction: String,
    pub output: String,
    pub category: String,
    pub keyword: String,
}

/// Metadata written next to an export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneSidecar {
    pub finetune_config: FineTuneConfigRecord,
    pub template_id: String,
    pub language: String,
    pub record_count: usize,
    pub clue_count: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExportOptions {
    /// Leave out clues carrying a hard validation flag.
    pub skip_flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportSummary {
    pub sidecar: FineTuneSidecar,
    pub skipped_sets: usize,
}

/// Writes one JSON line per (pair, clue set). Sets left empty (no clues, or
/// every clue skipped) produce no line.
pub fn export_finetune_records<W: Write>(
    sets: &[(ContextKeywordPair, Vec<ClueRecord>)],
    template: &PromptTemplate,
    config: &FineTuneConfigRecord,
    options: ExportOptions,
    out: &mut W,
) -> io::Result<ExportSummary> {
    let mut record_count = 0;
    let mut clue_count = 0;
    let mut skipped_sets = 0;
    for (pair, clues) in sets {
        let kept: Vec<&str> = clues
            .iter()
            .filter(|c| {
                !options.skip_flagged
                    || match &c.validation_status {
                        super::ValidationStatus::Pass => true,
                        super::ValidationStatus::Flagged(flags) => flags.iter().all(|f| !f.is_hard()),
                    }
            })
            .map(|c| c.clue_text.as_str())
            .collect();
        if kept.is_empty() {
            skipped_sets += 1;
            continue;
        }
        let instruction = build_prompt(pair, template, kept.len())
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        let record = ExportRecord {
            instruction,
            output: kept.join("\n"),
            category: pair.category.clone(),
            keyword: pair.keyword.clone(),
        };
        serde_json::to_writer(&mut *out, &record)?;
        out.write_all(b"\n")?;
        record_count += 1;
        clue_count += kept.len();
    }
    out.flush()?;
    Ok(ExportSummary {
        sidecar: FineTuneSidecar {
            finetune_config: config.clone(),
            template_id: template.template_id.clone(),
            language: template.language.clone(),
            record_count,
            clue_count,
        },
        skipped_sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(clues: &[&str]) -> (ContextKeywordPair, Vec<ClueRecord>) {
        let pair = ContextKeywordPair {
            context: "نص عن أدوات الكتابة".into(),
            keyword: "قلم".into(),
            category: "تعليم".into(),
            source_article_id: "a".into(),
        };
        let records = clues.iter().enumerate().map(|(i, c)| ClueRecord::new(&pair, i, c.to_string(), "mock")).collect();
        (pair, records)
    }

    #[test]
    fn one_line_per_set() {
        let sets = vec![set(&["أداة نكتب بها الدروس", "يستخدمه التلميذ في الصف", "رفيق الورقة والدفتر"])];
        let mut buf = Vec::new();
        let summary = export_finetune_records(
            &sets,
            &PromptTemplate::arabic(),
            &FineTuneConfigRecord::gpt35_turbo(),
            ExportOptions::default(),
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        let record: ExportRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(record.output.split('\n').count(), 3);
        assert_eq!(record.keyword, "قلم");
        assert!(record.instruction.contains("نص عن أدوات الكتابة"));
        assert_eq!(summary.sidecar.record_count, 1);
        assert_eq!(summary.sidecar.finetune_config.batch_size, 16);
    }

    #[test]
    fn sidecar_records_config_verbatim() {
        let mut buf = Vec::new();
        let summary = export_finetune_records(
            &[set(&["أداة نكتب بها الدروس"])],
            &PromptTemplate::arabic(),
            &FineTuneConfigRecord::llama3_8b_lora(),
            ExportOptions::default(),
            &mut buf,
        )
        .unwrap();
        let json = serde_json::to_value(&summary.sidecar).unwrap();
        assert_eq!(json["finetune_config"]["lora_r"], 32);
        assert_eq!(json["finetune_config"]["lora_alpha"], 64);
    }

    #[test]
    fn skip_flagged_drops_leaks() {
        let mut buf = Vec::new();
        let summary = export_finetune_records(
            &[set(&["القلم أداة للكتابة", "أداة نكتب بها الدروس"]), set(&["قلم"])],
            &PromptTemplate::arabic(),
            &FineTuneConfigRecord::gpt35_turbo(),
            ExportOptions { skip_flagged: true },
            &mut buf,
        )
        .unwrap();
        assert_eq!(summary.sidecar.clue_count, 1);
        assert_eq!(summary.skipped_sets, 1);
    }
}
