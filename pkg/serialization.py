"""
Report documents
================
Transcripts, plans and audit reports are written as canonical JSON: sorted
keys, two-space indent, integers and rationals as strings, no timestamps.
Each document carries a sha256 checksum of its own body so a rerun can be
compared byte for byte and a hand-edited file is detected on load.
"""

import hashlib
import json
import logging
import os
from typing import Any, Dict

logger = logging.getLogger(__name__)


class DocumentIntegrityError(Exception):
    """Stored checksum does not match the document body"""
    pass


def canonical_json(data: Dict[str, Any]) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False)


def calculate_checksum(data: Dict[str, Any]) -> str:
    """sha256 over the compact canonical form"""
    data_str = json.dumps(data, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(data_str.encode()).hexdigest()


def seal(kind: str, body: Dict[str, Any]) -> Dict[str, Any]:
    return {'kind': kind, 'body': body, 'checksum': calculate_checksum(body)}


def write_document(path: str, kind: str, body: Dict[str, Any]) -> str:
    """Write a sealed document and return its checksum"""
    document = seal(kind, body)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(canonical_json(document))
        f.write('\n')
    logger.info(f"✅ Wrote {kind} document to {path} (checksum {document['checksum'][:12]})")
    return document['checksum']


def read_document(path: str) -> Dict[str, Any]:
    """Load a sealed document, verifying its checksum"""
    with open(path, 'r', encoding='utf-8') as f:
        document = json.load(f)
    if not isinstance(document, dict) or not {'kind', 'body', 'checksum'} <= set(document):
        raise DocumentIntegrityError(f"{path} is not a sealed document")
    expected = calculate_checksum(document['body'])
    if expected != document['checksum']:
        logger.error(f"🚨 Checksum mismatch in {path}")
        raise DocumentIntegrityError(f"{path}: checksum {document['checksum']} does not match body ({expected})")
    return document
