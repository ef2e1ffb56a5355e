from datetime import datetime
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

Command = Literal["derive", "train", "simulate", "compare"]


class RunSubmitRequest(BaseModel):
    command: Command
    # a bundled config name, or inline TOML in config_text
    config_name: Optional[str] = None
    config_text: Optional[str] = None
    paper_scale: bool = False
    seed: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _one_source(self) -> "RunSubmitRequest":
        if (self.config_name is None) == (self.config_text is None):
            raise ValueError("give exactly one of config_name and config_text")
        return self


class RunSubmitResponse(BaseModel):
    run_id: str
    config_name: str
    message: str


class RunStatusResponse(BaseModel):
    run_id: str
    command: str
    config_name: str
    status: str
    paper_scale: bool
    seed: Optional[int]
    worker_id: Optional[str]
    output_dir: Optional[str]
    metrics: Optional[Dict[str, Any]]
    error_message: Optional[str]
    exit_code: Optional[int]
    created_at: datetime
    updated_at: datetime


class RunListItem(BaseModel):
    run_id: str
    command: str
    config_name: str
    status: str
    created_at: datetime


class RunListResponse(BaseModel):
    runs: List[RunListItem]
    total: int
    page: int
    page_size: int


class ConfigListResponse(BaseModel):
    configs: List[str]
    config_dir: str


class HealthResponse(BaseModel):
    status: str
    worker_count: int
    active_workers: int
    queue_depth: int
    db_path: str
