"""morphfit: вероятностная нежёсткая регистрация поверхностей."""
