import json

import pytest

from runtime import run_session
from serialization import DocumentIntegrityError, calculate_checksum, read_document, seal, write_document


class TestDocuments:

    def test_checksum_ignores_key_order(self):
        assert calculate_checksum({'a': '1', 'b': ['2']}) == calculate_checksum({'b': ['2'], 'a': '1'})

    def test_write_then_read(self, tmp_path, small_spec):
        transcript = run_session(small_spec, 0, seed=1)
        path = tmp_path / 'nested' / 'transcript.json'
        checksum = write_document(str(path), 'transcript', transcript.to_dict())
        assert checksum == transcript.checksum()
        document = read_document(str(path))
        assert document['body'] == transcript.to_dict()
        assert path.read_text().endswith('}\n')

    def test_tampered_body_is_detected(self, tmp_path):
        path = tmp_path / 'plan.json'
        write_document(str(path), 'plan', {'D': '15', 'alpha': '1'})
        document = json.loads(path.read_text())
        document['body']['D'] = '14'
        path.write_text(json.dumps(document))
        with pytest.raises(DocumentIntegrityError):
            read_document(str(path))

    def test_unsealed_file_is_rejected(self, tmp_path):
        path = tmp_path / 'raw.json'
        path.write_text(json.dumps({'D': '15'}))
        with pytest.raises(DocumentIntegrityError):
            read_document(str(path))

    def test_seal_layout(self):
        document = seal('audit', {'passed': True})
        assert set(document) == {'kind', 'body', 'checksum'}
        assert document['kind'] == 'audit'
