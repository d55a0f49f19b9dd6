"""Stage orchestration with a content-hashed manifest.

Each stage records the hashes of its inputs; re-running skips stages whose
inputs are unchanged and whose outputs still exist. Outputs are fully
deterministic for the mock backend, so two identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Optional

from . import corpus, glm, indicators, lexicon, sectionx, semclass
from .backends import BackendConfig, HTTPBackend, MockBackend
from .config import PipelineConfig
from .errors import ScholarpipeError, StageError, BackendExhausted
from .semclass import MethodLabel, PromptStrategy, PromptTemplates, StrategyKind

STAGES = (
    "ingest",
    "match",
    "classify",
    "extract-sections",
    "indicators",
    "fit",
    "geo",
    "report",
)

LANGUAGE_NAMES = {
    "en": "English",
    "de": "German",
    "es": "Spanish",
    "fr": "French",
    "id": "Indonesian",
    "pt": "Portuguese",
}

WORK_TYPE_TO_PUBLICATION_TYPE = {
    corpus.WorkType.ARTICLE: "article",
    corpus.WorkType.BOOK: "book",
    corpus.WorkType.BOOK_CHAPTER: "book",
    corpus.WorkType.DISSERTATION: "dissertation",
    corpus.WorkType.PREPRINT: "preprint",
}


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class Pipeline:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.out / "manifest.json"
        self._manifest = self._load_manifest()
        self._templates = self._load_templates()

    # -- manifest -----------------------------------------------------

    def _load_manifest(self) -> dict:
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text(encoding="utf-8"))
        return {"stages": {}}

    def _save_manifest(self) -> None:
        self.manifest_path.write_text(
            json.dumps(self._manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def _stage_cached(self, stage: str, inputs: dict[str, str], outputs: list[Path]) -> bool:
        entry = self._manifest["stages"].get(stage)
        return (
            entry is not None
            and entry.get("inputs") == inputs
            and all(p.exists() for p in outputs)
        )

    def _record_stage(self, stage: str, inputs: dict[str, str], outputs: list[Path]) -> None:
        self._manifest["stages"][stage] = {
            "inputs": inputs,
            "outputs": sorted(p.name for p in outputs),
        }
        self._save_manifest()

    # -- shared loaders ------------------------------------------------

    def _load_templates(self) -> PromptTemplates:
        cfg = self.config
        if cfg.prompt_stage1 and cfg.prompt_stage2:
            return PromptTemplates.from_files(cfg.prompt_stage1, cfg.prompt_stage2)
        return PromptTemplates.bundled()

    def _dictionaries(self) -> dict[lexicon.DictionaryName, lexicon.Dictionary]:
        cfg = self.config
        paths = {
            lexicon.DictionaryName.AI_TERMS: cfg.dict_ai,
            lexicon.DictionaryName.LINEAR_MODEL_TERMS: cfg.dict_linear,
            lexicon.DictionaryName.OTHER_STATS_TERMS: cfg.dict_other,
        }
        out = {}
        for name, path in paths.items():
            if path is not None:
                out[name] = lexicon.load_dictionary(path, name)
            else:
                out[name] = lexicon.bundled_dictionary(name)
        return out

    def _dictionary_hashes(self) -> dict[str, str]:
        dicts = self._dictionaries()
        return {name.value: _sha256_text(";".join(d.terms)) for name, d in dicts.items()}

    def _matcher(self) -> lexicon.Matcher:
        expanded = [lexicon.expand_terms(d) for d in self._dictionaries().values()]
        return lexicon.compile_matcher(expanded)

    def _backend(self):
        cfg = self.config
        if cfg.mock_backend:
            return MockBackend(self._matcher())
        return HTTPBackend(
            BackendConfig(
                endpoint=cfg.backend_endpoint,
                model=cfg.backend_model,
                timeout=cfg.backend_timeout,
                retries=cfg.backend_retries,
                temperature=cfg.backend_temperature,
                max_tokens=cfg.backend_max_tokens,
                response_path=cfg.backend_response_path,
            )
        )

    def _strategy(self) -> PromptStrategy:
        dicts = self._dictionaries()
        return PromptStrategy.from_dictionaries(
            self.config.strategy,
            ai=dicts[lexicon.DictionaryName.AI_TERMS],
            non_ai=dicts[lexicon.DictionaryName.LINEAR_MODEL_TERMS],
            seed=self.config.seed,
        )

    # -- paths ----------------------------------------------------------

    @property
    def normalized_path(self) -> Path:
        return self.out / "normalized.jsonl"

    @property
    def matches_path(self) -> Path:
        return self.out / "matches.jsonl"

    @property
    def classifications_path(self) -> Path:
        return self.out / f"classifications_{self.config.strategy.value}.jsonl"

    @property
    def sections_path(self) -> Path:
        return self.out / "sections.jsonl"

    # -- stages ----------------------------------------------------------

    def run(self, stages: Optional[Iterable[str]] = None) -> dict[str, str]:
        """Execute stages in dependency order; returns stage -> fresh|cached."""
        selected = list(stages) if stages is not None else list(STAGES)
        unknown = set(selected) - set(STAGES)
        if unknown:
            raise ScholarpipeError(f"unknown stages: {sorted(unknown)}")
        statuses: dict[str, str] = {}
        for stage in STAGES:
            if stage not in selected:
                continue
            runner = getattr(self, "_stage_" + stage.replace("-", "_"))
            try:
                statuses[stage] = runner()
            except (BackendExhausted, StageError):
                raise
            except ScholarpipeError as exc:
                raise StageError(f"{stage}: {exc}") from exc
        return statuses

    def _stage_ingest(self) -> str:
        inputs = {"corpus": _sha256_file(Path(self.config.corpus))}
        outputs = [self.normalized_path, self.out / "ingest_stats.json"]
        if self._stage_cached("ingest", inputs, outputs):
            return "cached"
        stats = corpus.IngestStats()
        corpus.write_normalized(
            corpus.ingest_stream(self.config.corpus, stats), self.normalized_path
        )
        (self.out / "ingest_stats.json").write_text(
            json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        self._record_stage("ingest", inputs, outputs)
        return "fresh"

    def _stage_match(self) -> str:
        inputs = {"normalized": _sha256_file(self.normalized_path), **self._dictionary_hashes()}
        outputs = [self.matches_path, self.out / "match_summary.json"]
        if self._stage_cached("match", inputs, outputs):
            return "cached"
        matcher = self._matcher()
        summary = {name.value: 0 for name in lexicon.DictionaryName}
        engaged = 0
        with open(self.matches_path, "w", encoding="utf-8") as out:
            for work in corpus.load_normalized(self.normalized_path):
                result = lexicon.match_abstract(matcher, work)
                for name in {h.dictionary for h in result.hits}:
                    summary[name.value] += 1
                engaged += int(result.engaged_ai)
                out.write(json.dumps(
                    {
                        "work_id": result.work_id,
                        "engaged_ai": result.engaged_ai,
                        "uses_linear_terms": result.uses_linear_terms,
                        "uses_other_stats_terms": result.uses_other_stats_terms,
                        "hits": [
                            {"term": h.term, "dictionary": h.dictionary.value, "start": h.start, "end": h.end}
                            for h in result.hits
                        ],
                    },
                    sort_keys=True, ensure_ascii=False,
                ))
                out.write("\n")
        summary["engaged_ai_works"] = engaged
        (self.out / "match_summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        self._record_stage("match", inputs, outputs)
        return "fresh"

    def _stage_classify(self) -> str:
        cfg = self.config
        inputs = {
            "normalized": _sha256_file(self.normalized_path),
            "stage1_prompt": _sha256_text(self._templates.stage1),
            "stage2_prompt": _sha256_text(self._templates.stage2),
            "strategy": cfg.strategy.value,
            "seed": str(cfg.seed),
            "backend": "mock" if cfg.mock_backend else f"http:{cfg.backend_endpoint}:{cfg.backend_model}",
            **self._dictionary_hashes(),
        }
        outputs = [self.classifications_path]
        if self._stage_cached("classify", inputs, outputs):
            return "cached"
        prior = self._manifest["stages"].get("classify")
        if prior is not None and prior.get("inputs") != inputs and self.classifications_path.exists():
            # Stale checkpoint from a different configuration.
            self.classifications_path.unlink()
        backend = self._backend()
        stats = semclass.CampaignStats()
        for _ in semclass.run_campaign(
            corpus.load_normalized(self.normalized_path),
            self._strategy(),
            backend,
            self.classifications_path,
            templates=self._templates,
            stats=stats,
        ):
            pass
        self._record_stage("classify", inputs, outputs)
        return "fresh"

    def _stage_extract_sections(self) -> str:
        if self.config.fulltext is None:
            inputs = {"fulltext": "absent"}
            outputs = [self.sections_path]
            if self._stage_cached("extract-sections", inputs, outputs):
                return "cached"
            self.sections_path.write_text("", encoding="utf-8")
            self._record_stage("extract-sections", inputs, outputs)
            return "fresh"
        inputs = {"fulltext": _sha256_file(Path(self.config.fulltext))}
        outputs = [self.sections_path, self.out / "sections_summary.json"]
        if self._stage_cached("extract-sections", inputs, outputs):
            return "cached"
        embedder = sectionx.HashEmbedder()
        counts = {s.value: 0 for s in sectionx.SelectionStrategy}
        with open(self.sections_path, "w", encoding="utf-8") as out:
            for doc in sectionx.load_documents(self.config.fulltext):
                section, strategy = sectionx.find_methods_section(doc, embedder)
                counts[strategy.value] += 1
                out.write(sectionx.extraction_record(doc, section, strategy))
                out.write("\n")
        (self.out / "sections_summary.json").write_text(
            json.dumps({"counts": counts, "query": sectionx.DEFAULT_METHODS_QUERY}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        self._record_stage("extract-sections", inputs, outputs)
        return "fresh"

    def _load_joined(self):
        works = {w.work_id: w for w in corpus.load_normalized(self.normalized_path)}
        results = semclass.load_results(self.classifications_path)
        matches = []
        with open(self.matches_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    matches.append(lexicon.MatchResult(
                        work_id=obj["work_id"],
                        hits=tuple(
                            lexicon.Hit(h["term"], lexicon.DictionaryName(h["dictionary"]), h["start"], h["end"])
                            for h in obj.get("hits", [])
                        ),
                        engaged_ai=obj["engaged_ai"],
                        uses_linear_terms=obj["uses_linear_terms"],
                        uses_other_stats_terms=obj["uses_other_stats_terms"],
                    ))
        return works, results, matches

    def _stage_indicators(self) -> str:
        inputs = {
            "normalized": _sha256_file(self.normalized_path),
            "matches": _sha256_file(self.matches_path),
            "classifications": _sha256_file(self.classifications_path),
        }
        out_path = self.out / "indicators.csv"
        outputs = [out_path]
        if self._stage_cached("indicators", inputs, outputs):
            return "cached"
        works, results, matches = self._load_joined()
        taxonomy = corpus.Taxonomy.from_json(self.config.taxonomy) if self.config.taxonomy else None

        rows: list[tuple] = []

        def emit(level, group, year, metric, num, den, value):
            rows.append((level, group, "" if year is None else year, metric,
                         "" if num is None else num, "" if den is None else den,
                         f"{value:.6f}"))

        for level in ("domain", "field"):
            adoption = indicators.adoption_series(results, works, level)
            engagement = indicators.engagement_series(matches, results, works, level)
            for group in sorted(adoption):
                series = adoption[group]
                for year in sorted(series.points):
                    num, den = series.points[year]
                    if den:
                        emit(level, group, year, "adoption", num, den, 100.0 * num / den)
            for group in sorted(engagement):
                series = engagement[group]
                for year in sorted(series.points):
                    num, den = series.points[year]
                    if den:
                        emit(level, group, year, "engagement", num, den, 100.0 * num / den)
            discussion = indicators.discussion_series(engagement, adoption)
            for group in sorted(discussion):
                for year in sorted(discussion[group]):
                    emit(level, group, year, "discussion", None, None, discussion[group][year])

        # Visibility and retractions per domain-year over classified works.
        by_group_year: dict[tuple[str, int], list] = {}
        labels = {r.work_id: r.label for r in results}
        for work in works.values():
            if work.domain_id is None or work.work_id not in labels:
                continue
            by_group_year.setdefault((work.domain_id, work.pub_year), []).append(work)
        for (group, year) in sorted(by_group_year):
            bucket = by_group_year[(group, year)]
            n = len(bucket)
            flags = [indicators.visibility_flags(w) for w in bucket]
            cited = sum(f.cited_once for f in flags)
            high = sum(f.highly_cited for f in flags)
            retracted = sum(w.retracted for w in bucket)
            emit("domain", group, year, "cited_once", cited, n, 100.0 * cited / n)
            emit("domain", group, year, "highly_cited", high, n, 100.0 * high / n)
            emit("domain", group, year, "retraction_rate", retracted, n,
                 indicators.retraction_rate(retracted, n))

        # Topic concentration per (field, label).
        topic_universe: dict[str, int] = {}
        if taxonomy is not None:
            for topic, field_id in taxonomy.topic_to_field.items():
                topic_universe[field_id] = topic_universe.get(field_id, 0) + 1
        dists = indicators.topic_distributions(results, works, "field")
        for (group, label) in sorted(dists, key=lambda k: (k[0], k[1].value)):
            dist = dists[(group, label)]
            if dist.total == 0:
                continue
            tag = f"{group}|{label.value}"
            emit("field-label", tag, None, "top5_share", None, dist.total, indicators.top5_share(dist))
            k = topic_universe.get(group, 0)
            if k >= 2:
                emit("field-label", tag, None, "entropy", None, dist.total,
                     indicators.normalized_entropy(dist, k))

        # Reference flags, resolved within the ingested corpus.
        if taxonomy is not None:
            resolver = lambda ref_id: works[ref_id].field_id if ref_id in works else None
            per_group: dict[str, list[corpus.ReferenceFlags]] = {}
            for work in works.values():
                if work.domain_id is None or work.field_id is None:
                    continue
                per_group.setdefault(work.domain_id, []).append(
                    corpus.reference_flags(work, resolver, taxonomy.cs_field_id)
                )
            for group in sorted(per_group):
                flags = per_group[group]
                n = len(flags)
                for metric, num in (
                    ("cites_cs", sum(f.cites_cs for f in flags)),
                    ("cites_same_field", sum(f.cites_same_field for f in flags)),
                    ("cites_other_excl_cs", sum(f.cites_other_excl_cs for f in flags)),
                ):
                    emit("domain", group, None, metric, num, n, 100.0 * num / n)

        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["level", "group", "year", "metric", "numerator", "denominator", "value"])
            writer.writerows(rows)
        self._record_stage("indicators", inputs, outputs)
        return "fresh"

    def _design_records(self, works, results) -> list[dict]:
        rows = []
        for result in results:
            if result.label is MethodLabel.UNCLASSIFIABLE:
                continue
            work = works.get(result.work_id)
            if work is None or not (2000 <= work.pub_year <= 2025):
                continue
            try:
                year_bin = glm.year_bin_of(work.pub_year)
            except ScholarpipeError:
                continue
            rows.append({
                "retracted": int(work.retracted),
                "cited_once": int(indicators.visibility_flags(work).cited_once),
                "publication_type": WORK_TYPE_TO_PUBLICATION_TYPE[work.work_type],
                "year_bin": year_bin,
                "language": LANGUAGE_NAMES.get(work.language, "Other"),
                "method_label": result.label.value,
            })
        return rows

    def _stage_fit(self) -> str:
        inputs = {
            "normalized": _sha256_file(self.normalized_path),
            "classifications": _sha256_file(self.classifications_path),
        }
        coef_path = self.out / "coefficients.csv"
        pred_path = self.out / "predictions.csv"
        meta_path = self.out / "fit_meta.json"
        outputs = [coef_path, pred_path, meta_path]
        if self._stage_cached("fit", inputs, outputs):
            return "cached"
        works, results, _ = self._load_joined()
        records = self._design_records(works, results)
        spec = glm.DesignSpec(response="retracted")
        X, y = glm.encode_design(records, spec)
        fit = glm.fit_quasipoisson(X, y, column_names=spec.column_names)
        with open(coef_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["term", "estimate", "std_error"])
            for name, est, se in zip(fit.column_names, fit.coefficients, fit.std_errors()):
                writer.writerow([name, f"{est:.10g}", f"{se:.10g}"])
        reference = {f.name: f.levels[0] for f in spec.factors}
        with open(pred_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["profile", "scale", "value"])
            for label in glm.METHOD_LABEL.levels:
                profile = dict(reference, method_label=label)
                value = glm.predict_adjusted(fit, profile, spec, scale="per-1000")
                writer.writerow([f"method_label={label}", "per-1000", f"{value:.10g}"])
        meta = {
            "response": spec.response,
            "n": len(records),
            "converged": fit.converged,
            "n_iter": fit.n_iter,
            "dispersion": round(fit.dispersion, 10),
            "deviance": round(fit.deviance, 10),
            "model_scope": "pooled over fields in this run; per-field fits are per-field invocations",
        }
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self._record_stage("fit", inputs, outputs)
        return "fresh"

    def _stage_geo(self) -> str:
        if self.config.population is None:
            raise StageError("geo: no population table configured")
        inputs = {
            "normalized": _sha256_file(self.normalized_path),
            "classifications": _sha256_file(self.classifications_path),
            "population": _sha256_file(Path(self.config.population)),
        }
        countries_path = self.out / "countries.csv"
        stats_path = self.out / "geo_stats.json"
        outputs = [countries_path, stats_path]
        if self._stage_cached("geo", inputs, outputs):
            return "cached"
        works, results, _ = self._load_joined()
        population = load_population(self.config.population)
        ai_ids = {r.work_id for r in results if r.label is MethodLabel.AI_METHODS}
        stats = indicators.GeoStats()
        aggregates = indicators.country_stats(works.values(), ai_ids, population, stats)
        with open(countries_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["country", "population", "publications", "ai_publications", "rate_per_100k", "pct_ai"])
            for agg in aggregates:
                writer.writerow([
                    agg.country, agg.population, agg.publications, agg.ai_publications,
                    f"{agg.rate_per_100k:.6f}", f"{agg.pct_ai:.6f}",
                ])
        stats_path.write_text(json.dumps({
            "excluded_works": stats.excluded_works,
            "excluded_countries": stats.excluded_countries,
            "missing_population_countries": stats.missing_population_countries,
            "missing_country_works": stats.missing_country_works,
            "included_countries": len(aggregates),
        }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self._record_stage("geo", inputs, outputs)
        return "fresh"

    def _stage_report(self) -> str:
        inputs = {
            "classifications": _sha256_file(self.classifications_path),
            "indicators": _sha256_file(self.out / "indicators.csv"),
        }
        report_path = self.out / "report.json"
        outputs = [report_path]
        if self._stage_cached("report", inputs, outputs):
            return "cached"
        works, results, _ = self._load_joined()
        totals = {label.value: 0 for label in MethodLabel}
        for result in results:
            totals[result.label.value] += 1
        adoption = indicators.adoption_series(results, works, "domain")
        growth: dict[str, dict] = {}
        for group in sorted(adoption):
            series = adoption[group]
            entry: dict = {}
            onset = indicators.growth_onset(series)
            entry["onset_year"] = onset
            try:
                entry["growth_2005_2024"] = indicators.growth_multiple(series, 2005, 2024).to_dict()
            except ScholarpipeError:
                entry["growth_2005_2024"] = None
            except ValueError:
                entry["growth_2005_2024"] = None
            growth[group] = entry
        report = {
            "label_totals": totals,
            "classified_works": sum(totals.values()),
            "strategy": self.config.strategy.value,
            "seed": self.config.seed,
            "adoption_growth_by_domain": growth,
        }
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self._record_stage("report", inputs, outputs)
        return "fresh"


def load_population(path: str | Path) -> dict[str, int]:
    """CSV keyed by ISO-3166 alpha-2 code with a population column."""
    out: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["country"].strip()] = int(row["population"])
    return out
