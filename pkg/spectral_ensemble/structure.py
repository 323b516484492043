from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .meta import META_METHODS


class ExperimentConfig(BaseModel):
    """Merged settings of one CLI invocation; every field mirrors a flag."""

    model_config = ConfigDict(extra="forbid")

    mode: Literal["rank", "predict", "simulate", "bench"] = Field(description="subcommand")
    input: str | None = Field(default=None, description="prediction CSV, rows are instances")
    labels: str | None = Field(default=None, description="truth CSV, one +/-1 label per line")
    out: str | None = Field(default=None, description="report path; defaults inside out_dir")
    out_dir: str = Field(default="output", description="directory for generated files")
    method: Literal["linear", "weighted", "trace", "eigen"] = Field(default="linear",
                                                                    description="diagonal recovery method")
    meta: list[str] = Field(default_factory=lambda: ["vote", "sml", "imle-sml", "imle-vote"],
                            description="meta-learners to run")
    sign_rule: Literal["sum", "majority"] = Field(default="sum", description="eigenvector sign convention")
    factor: float = Field(default=2.0, ge=0, description="significance threshold in standard errors")
    theta: float | None = Field(default=None, gt=0, description="trace penalty; None picks 0.1 mean|q_ij|")
    clamp: float = Field(default=1e-3, gt=0, lt=0.5, description="psi/eta clamp inside MLE weights")
    max_iter: int = Field(default=100, ge=1, description="EM iteration cap")
    M: int = Field(default=100, ge=2, description="number of classifiers")
    S: int = Field(default=600, ge=2, description="number of test instances")
    b: float = Field(default=0.0, gt=-1, lt=1, description="class imbalance")
    pi_min: float = Field(default=0.3, ge=0, le=1, description="lower end of honest balanced accuracies")
    pi_max: float = Field(default=0.8, ge=0, le=1, description="upper end of honest balanced accuracies")
    cartel_r: float = Field(default=0.0, ge=0, lt=1, description="fraction of classifiers in the cartel")
    pi_c: float = Field(default=0.5, ge=0, le=1, description="balanced accuracy of the cartel target")
    xi: float = Field(default=0.7, ge=0, le=1, description="members' balanced accuracy w.r.t. the target")
    pool_size: int | None = Field(default=10000, description="RDFBA pool T; None builds on the test set")
    runs: int = Field(default=300, ge=1, description="Monte-Carlo runs per setting")
    seed: int = Field(default=0, ge=0, description="root seed")
    workers: int = Field(default=1, ge=1, description="parallel bench workers")
    preset: Literal["fig2a", "fig2b", "figS2", "figS3", "figS6", "figS1", "lemma"] | None = Field(
        default=None, description="bench preset")
    lemma_m: int = Field(default=9, ge=3, description="ensemble size of the lemma sweep")
    psi: float = Field(default=0.6, gt=0.5, le=1, description="homogeneous sensitivity of the lemma sweep")
    convention: Literal["left", "right", "coin"] = Field(default="left", description="tie convention of the lemma sweep")

    @field_validator("meta", mode="before")
    @classmethod
    def split_meta(cls, value: Any) -> Any:
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        return value

    @field_validator("meta")
    @classmethod
    def known_meta(cls, value: list[str]) -> list[str]:
        unknown = [v for v in value if v not in META_METHODS]
        if unknown:
            raise ValueError(f"unknown meta-learners {unknown}; choose from {list(META_METHODS)}")
        if not value:
            raise ValueError("at least one meta-learner is required")
        return list(dict.fromkeys(value))

    @field_validator("theta", "input", "labels", "out", "preset", mode="before")
    @classmethod
    def blank_is_none(cls, value: Any) -> Any:
        return None if value == "" else value

    @field_validator("pool_size", mode="before")
    @classmethod
    def zero_pool_is_none(cls, value: Any) -> Any:
        if value in ("", "0", 0, "none", "None"):
            return None
        return value

    @field_validator("pool_size")
    @classmethod
    def positive_pool(cls, value: int | None) -> int | None:
        if value is not None and value < 2:
            raise ValueError("pool_size must be at least 2 (or 0 to build on the test set)")
        return value

    @model_validator(mode="after")
    def consistent(self) -> ExperimentConfig:
        if self.pi_min > self.pi_max:
            raise ValueError(f"pi_min {self.pi_min} exceeds pi_max {self.pi_max}")
        if self.mode in ("rank", "predict") and not self.input:
            raise ValueError(f"{self.mode} needs --input")
        if self.mode == "bench" and self.preset is None:
            raise ValueError("bench needs --preset")
        if self.lemma_m % 2 == 0:
            raise ValueError(f"lemma_m must be odd, got {self.lemma_m}")
        if self.pool_size is not None and self.pool_size < self.S:
            raise ValueError(f"pool_size {self.pool_size} is smaller than S {self.S}")
        if self.mode in ("simulate", "bench") and self.M - int(self.cartel_r * self.M + 0.5) < 1:
            raise ValueError(f"cartel fraction {self.cartel_r} leaves no honest classifier among M={self.M}")
        return self


class Report(BaseModel):
    """Top-level JSON document written by every subcommand."""

    config: dict[str, Any] = Field(description="full merged configuration")
    seed: int | None = Field(description="root seed; None when nothing was random")
    results: dict[str, Any] = Field(description="subcommand-specific results")
    warnings: list[str] = Field(default_factory=list, description="non-fatal flags raised along the way")
