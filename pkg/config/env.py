from dotenv import load_dotenv

# Loads a local .env (if present) before any module reads its defaults from os.environ
load_dotenv()
