from pydantic import BaseModel


class MessageSchema(BaseModel):
    """Error body returned by the API, ``{"detail": ...}``."""
    detail: str
