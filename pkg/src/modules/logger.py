import logging
from logging.handlers import TimedRotatingFileHandler
import os
from dotenv import load_dotenv

# Carregar as variáveis do arquivo .env
load_dotenv()
PATH_LOGS = os.getenv("PATH_LOGS", "logs")
LOG_FILE = os.getenv("LOG_FILE_NAME", 'rover.log')
RETENTION_TIME_LOGS = int(os.getenv("RETENTION_TIME_LOGS", 30))
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()

class Logger:
    def __init__(self, path_logs=None, run_id=None, log_name=None):
        self.path_logs = str(path_logs) if path_logs else PATH_LOGS
        os.makedirs(self.path_logs, exist_ok=True)
        self.retention_time = RETENTION_TIME_LOGS
        self.log_name = log_name if log_name else LOG_FILE
        self.log_filename = os.path.abspath(os.path.join(self.path_logs, self.log_name))
        self.run_id = '' if run_id is None else str(run_id)
        self.auto_logger = self.create_log_file()

    def create_log_file(self):
        # um logger por arquivo, para que instâncias diferentes não dupliquem handlers
        logger = logging.getLogger(f"{__name__}.{self.log_filename}")
        logger.setLevel(getattr(logging, LOG_LEVEL, logging.INFO))
        logger.propagate = False

        already = any(
            isinstance(h, TimedRotatingFileHandler) and getattr(h, "baseFilename", None) == self.log_filename
            for h in logger.handlers
        )
        if already:
            return logger

        file_handler = TimedRotatingFileHandler(
            self.log_filename, when="D", interval=1, backupCount=self.retention_time, encoding='utf-8'
        )
        formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')
        file_handler.setFormatter(formatter)

        logger.addHandler(file_handler)
        return logger

    def _fmt(self, message):
        return f"[{self.run_id}] {message}" if self.run_id else str(message)

    def debug(self, message):
        self.auto_logger.debug(self._fmt(message))

    def info(self, message):
        self.auto_logger.info(self._fmt(message))

    def warning(self, message):
        self.auto_logger.warning(self._fmt(message))

    def error(self, message):
        self.auto_logger.error(self._fmt(message))

    def close_file(self):
        handlers = self.auto_logger.handlers[:]
        for handler in handlers:
            handler.close()
            self.auto_logger.removeHandler(handler)


def require_logger(logger, owner: str):
    """Valida a interface mínima de logger (mesma regra do leitor de arquivos)."""
    if logger is None:
        raise ValueError(f"logger é obrigatório para {owner}")
    for m in ("info", "warning", "error"):
        if not hasattr(logger, m):
            raise TypeError(f"logger não possui método '{m}' necessário")
    return logger
